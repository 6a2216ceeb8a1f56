"""Transition metrics over pluggable frame/text embedders.

Both metrics compare embedding-space movement against the direction implied
by the condition pair (final minus initial):

* wholistic score — cosine between (last frame - first frame) embeddings and
  the condition direction; measures whether the overall change points the
  intended way.
* frame-wise score — mean cosine between every consecutive-frame embedding
  difference and the condition direction; measures smoothness. Static
  consecutive pairs (zero embedding difference) contribute 0 and are
  counted, since the cosine is undefined there.

The embedder interface mirrors an image/text encoder pair; the toy linear
embedder below stands in for one at desk scale by projecting latents and
condition means through a shared full-row-rank matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Protocol

import numpy as np

from .diffusion import LatentVideo, _frozen
from .errors import ConfigError, DimMismatch, ZeroVector

ZERO_NORM_TOL = 1e-12


class Embedder(Protocol):
    """Deterministic frame and condition encoders with a fixed output dim."""

    def embed_frame(self, frame: np.ndarray) -> np.ndarray: ...

    def embed_condition(self, condition: str) -> np.ndarray: ...


@dataclass(frozen=True)
class ToyLinearEmbedder:
    """Linear stand-in for a learned encoder.

    Frames embed through a full-row-rank (E, D) projection; conditions embed
    through the same projection applied to their distribution means.
    """

    projection: np.ndarray
    condition_means: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        proj = np.atleast_2d(np.asarray(self.projection, dtype=np.float64))
        if np.linalg.matrix_rank(proj) != proj.shape[0]:
            raise ConfigError(f"projection of shape {proj.shape} is not full row rank")
        object.__setattr__(self, "projection", _frozen(proj))
        object.__setattr__(
            self,
            "condition_means",
            {k: _frozen(np.atleast_1d(np.asarray(v, dtype=np.float64))) for k, v in self.condition_means.items()},
        )

    @classmethod
    def identity(cls, dim: int, condition_means: Mapping[str, np.ndarray]) -> "ToyLinearEmbedder":
        return cls(projection=np.eye(dim), condition_means=condition_means)

    def embed_frame(self, frame: np.ndarray) -> np.ndarray:
        frame = np.atleast_1d(np.asarray(frame, dtype=np.float64))
        if frame.shape[0] != self.projection.shape[1]:
            raise DimMismatch(
                f"frame dim {frame.shape[0]} does not match projection input dim {self.projection.shape[1]}"
            )
        return self.projection @ frame

    def embed_condition(self, condition: str) -> np.ndarray:
        try:
            mean = self.condition_means[condition]
        except KeyError:
            raise ConfigError(f"embedder knows no condition {condition!r}") from None
        return self.projection @ mean


class FramewiseResult(NamedTuple):
    """Mean per-step cosine, the per-step cosines, and the static-pair count."""

    score: float
    per_step: tuple[float, ...]
    static_pairs: int


@dataclass(frozen=True)
class TransitionReport:
    """Scores for one sampled video, plus its per-frame attribute trajectory."""

    scenario_id: str
    mode: str
    seed: int
    wholistic: float
    framewise: float
    per_step_cosines: tuple[float, ...]
    static_pairs: int


def directional_similarity(v_img: np.ndarray, v_txt: np.ndarray) -> float:
    """Cosine of two difference vectors, clamped to [-1, 1] against rounding."""
    v_img = np.asarray(v_img, dtype=np.float64)
    v_txt = np.asarray(v_txt, dtype=np.float64)
    n_img = np.linalg.norm(v_img)
    n_txt = np.linalg.norm(v_txt)
    if n_img < ZERO_NORM_TOL:
        raise ZeroVector(f"image direction norm {n_img:.3e} is degenerate (static video?)")
    if n_txt < ZERO_NORM_TOL:
        raise ZeroVector(f"text direction norm {n_txt:.3e} is degenerate (identical conditions?)")
    return float(np.clip(np.dot(v_img, v_txt) / (n_img * n_txt), -1.0, 1.0))


def _condition_direction(cond_initial: str, cond_final: str, embedder: Embedder) -> np.ndarray:
    return embedder.embed_condition(cond_final) - embedder.embed_condition(cond_initial)


def wholistic_score(
    video: LatentVideo, cond_initial: str, cond_final: str, embedder: Embedder
) -> float:
    """Cosine between (last - first frame embedding) and the condition direction."""
    if video.frames < 2:
        raise DimMismatch("wholistic score needs at least two frames")
    v_img = embedder.embed_frame(video.data[-1]) - embedder.embed_frame(video.data[0])
    return directional_similarity(v_img, _condition_direction(cond_initial, cond_final, embedder))


def framewise_score(
    video: LatentVideo, cond_initial: str, cond_final: str, embedder: Embedder
) -> FramewiseResult:
    """Mean cosine between consecutive-frame embedding steps and the condition direction.

    Raises ZeroVector only for a degenerate text direction; static frame
    pairs contribute a 0 cosine and are counted in ``static_pairs``.
    """
    if video.frames < 2:
        raise DimMismatch("frame-wise score needs at least two frames")
    v_txt = _condition_direction(cond_initial, cond_final, embedder)
    if np.linalg.norm(v_txt) < ZERO_NORM_TOL:
        raise ZeroVector("text direction is degenerate (identical conditions?)")
    embedded = np.stack([embedder.embed_frame(f) for f in video.data])
    cosines: list[float] = []
    static = 0
    for i in range(video.frames - 1):
        diff = embedded[i + 1] - embedded[i]
        if np.linalg.norm(diff) < ZERO_NORM_TOL:
            static += 1
            cosines.append(0.0)
        else:
            cosines.append(directional_similarity(diff, v_txt))
    return FramewiseResult(score=float(np.mean(cosines)), per_step=tuple(cosines), static_pairs=static)
