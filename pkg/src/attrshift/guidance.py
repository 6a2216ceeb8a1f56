"""Score-space guidance math.

Implements the manipulations applied to denoiser outputs:

* classifier-free guidance,
      eps_guided = (1 + omega) * eps_cond - omega * eps_uncond
* the unit transitional direction between two conditions,
      dir = (eps(z_t, final) - eps(z_t, initial)) / ||...||_2
  normalized once over the whole (frames, dim) tensor so all frames share
  one manipulation scale (per-frame normalization is available as an
  ablation switch),
* a linear per-frame scale ramp,
* the naive frame-wise refinement (initial-prompt score plus a growing
  multiple of the direction),
* the anchored refinement (neutral-prompt score, middle frame untouched,
  preceding frames pushed against the direction and following frames along
  it), and
* the per-frame convex blend of two conditional scores used by
  prompt-interpolation baselines.

All functions are pure over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoisers import Denoiser
from .diffusion import LatentVideo, _frozen
from .errors import ConfigError, DegenerateDirection, ShapeMismatch

MODES = ("ours_anchored", "naive_additive", "single_prompt", "prompt_interpolation")
SCHEDULE_SHAPES = ("linear",)

DEGENERATE_NORM_TOL = 1e-12


@dataclass(frozen=True)
class GuidanceSpec:
    """Knobs controlling guided sampling.

    omega            classifier-free guidance scale (>= 0)
    tau              number of warmup steps sampled under the neutral prompt
    alpha_max        transition-scale bound; the per-frame scale ramps
                     linearly from 0 at the middle frame to alpha_max at
                     either end of the video
    middle_frame     anchored frame index M; None means frames // 2
    schedule_shape   shape of the scale ramp ("linear")
    mode             one of ours_anchored | naive_additive | single_prompt |
                     prompt_interpolation
    per_frame_norm   ablation: normalize the direction frame by frame
                     instead of globally
    freeze_direction reuse the direction computed at the first guided step
                     instead of re-deriving it every step
    naive_alpha_min  ramp start for naive_additive (frame 0 scale)
    single_condition condition id driving single_prompt mode
    """

    omega: float = 12.0
    tau: int = 5
    alpha_max: float = 1.0
    middle_frame: int | None = None
    schedule_shape: str = "linear"
    mode: str = "ours_anchored"
    per_frame_norm: bool = False
    freeze_direction: bool = False
    naive_alpha_min: float = 0.0
    single_condition: str = "neutral"

    def __post_init__(self) -> None:
        if self.omega < 0.0:
            raise ConfigError(f"omega must be >= 0, got {self.omega}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.alpha_max < 0.0:
            raise ConfigError(f"alpha_max must be >= 0, got {self.alpha_max}")
        if self.schedule_shape not in SCHEDULE_SHAPES:
            raise ConfigError(f"unknown schedule shape {self.schedule_shape!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")

    def resolve_middle(self, frames: int) -> int:
        m = frames // 2 if self.middle_frame is None else self.middle_frame
        if not 0 <= m <= frames - 1:
            raise ConfigError(f"middle frame {m} outside [0, {frames - 1}]")
        return m


@dataclass(frozen=True)
class TransitionalDirection:
    """Unit steering vector in noise-prediction space.

    ``data`` has global L2 norm 1; ``raw_norm`` is the pre-normalization
    norm of the conditional-score difference.
    """

    data: np.ndarray
    raw_norm: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _frozen(self.data))

    @property
    def frames(self) -> int:
        return self.data.shape[0]


def cfg_epsilon(eps_cond: LatentVideo, eps_uncond: LatentVideo, omega: float) -> LatentVideo:
    """Classifier-free guidance: (1 + omega) * eps_cond - omega * eps_uncond."""
    eps_cond.require_same_shape(eps_uncond, "cfg unconditional score")
    return LatentVideo((1.0 + omega) * eps_cond.data - omega * eps_uncond.data)


def transitional_direction(
    zt: LatentVideo,
    t: int,
    cond_initial: str,
    cond_final: str,
    denoiser: Denoiser,
    per_frame_norm: bool = False,
) -> TransitionalDirection:
    """Unit direction from the initial-condition score to the final one.

    The difference eps(z_t, final) - eps(z_t, initial) is normalized by its
    global L2 norm over all frames and coordinates (one consistent scale for
    the whole video). With ``per_frame_norm`` every frame is rescaled to
    unit norm individually; ``raw_norm`` always reports the global norm.
    """
    if cond_initial == cond_final:
        raise DegenerateDirection("initial and final conditions are identical")
    delta = (
        denoiser.evaluate(zt, t, cond_final).data
        - denoiser.evaluate(zt, t, cond_initial).data
    )
    raw_norm = float(np.linalg.norm(delta))
    if raw_norm < DEGENERATE_NORM_TOL:
        raise DegenerateDirection(
            f"conditional scores coincide (|delta| = {raw_norm:.3e}); "
            "the two conditions are indistinguishable at this noise level"
        )
    if per_frame_norm:
        frame_norms = np.linalg.norm(delta, axis=1, keepdims=True)
        if np.any(frame_norms < DEGENERATE_NORM_TOL):
            raise DegenerateDirection("a per-frame score difference is degenerate")
        data = delta / frame_norms
    else:
        data = delta / raw_norm
    return TransitionalDirection(data=data, raw_norm=raw_norm)


def alpha_at(frame_offset: int, spec: GuidanceSpec, frames: int, ramp_len: int | None = None) -> float:
    """Scale at ``frame_offset`` steps from the middle frame.

    Linear ramp from 0 at the middle frame to ``alpha_max`` at the end of a
    side. ``ramp_len`` is the side length; it defaults to frames - 1 - M
    (the trailing side). Both video ends therefore reach alpha_max exactly,
    so the signed scale spans [-alpha_max, +alpha_max] across the frames
    even when the two sides have unequal lengths.
    """
    m = spec.resolve_middle(frames)
    if not 0 <= frame_offset <= max(m, frames - 1 - m):
        raise ConfigError(f"frame offset {frame_offset} outside [0, {max(m, frames - 1 - m)}]")
    if frame_offset == 0:
        return 0.0
    if ramp_len is None:
        ramp_len = frames - 1 - m
    return spec.alpha_max * frame_offset / ramp_len


def signed_scale_profile(spec: GuidanceSpec, frames: int) -> np.ndarray:
    """Signed per-frame scale for the anchored refinement.

    Entry j is -alpha_{M-j} before the middle frame, 0 at it, and
    +alpha_{j-M} after it; each side ramps over its own length so the first
    and last frames sit at -alpha_max and +alpha_max. The sequence is
    nondecreasing in j.
    """
    m = spec.resolve_middle(frames)
    scales = np.zeros(frames)
    for j in range(frames):
        if j < m:
            scales[j] = -alpha_at(m - j, spec, frames, ramp_len=m)
        elif j > m:
            scales[j] = alpha_at(j - m, spec, frames, ramp_len=frames - 1 - m)
    return scales


def naive_scale_profile(spec: GuidanceSpec, frames: int) -> np.ndarray:
    """Per-frame scale for the naive refinement: a 0 -> alpha_max ramp.

    Ramps linearly from ``naive_alpha_min`` at frame 0 to ``alpha_max`` at
    the last frame. A single-frame video keeps the ramp base.
    """
    if frames == 1:
        return np.array([spec.naive_alpha_min])
    ramp = np.arange(frames) / (frames - 1)
    return spec.naive_alpha_min + (spec.alpha_max - spec.naive_alpha_min) * ramp


def refined_epsilon_naive(
    eps_initial: LatentVideo,
    direction: TransitionalDirection,
    spec: GuidanceSpec,
    alphas: np.ndarray | None = None,
) -> LatentVideo:
    """Naive frame-wise refinement: eps_hat_j = eps_initial_j + alpha_j * dir_j.

    ``alphas`` overrides the default ramp with explicit per-frame scales
    (e.g. raw_norm to undo the unit normalization and recover the final
    conditional score exactly).
    """
    if eps_initial.shape != direction.data.shape:
        raise ShapeMismatch(
            f"direction shape {direction.data.shape} does not match scores {eps_initial.shape}"
        )
    if alphas is None:
        alphas = naive_scale_profile(spec, eps_initial.frames)
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.shape != (eps_initial.frames,):
        raise ShapeMismatch(f"alphas must have shape ({eps_initial.frames},), got {alphas.shape}")
    return LatentVideo(eps_initial.data + alphas[:, None] * direction.data)


def refined_epsilon_anchored(
    eps_neutral: LatentVideo,
    direction: TransitionalDirection,
    spec: GuidanceSpec,
) -> LatentVideo:
    """Neutral-anchored refinement.

    Frames before the middle are pushed against the direction, frames after
    it along the direction, with scales growing linearly away from the
    middle; the middle frame is the neutral score bit for bit.
    """
    if eps_neutral.shape != direction.data.shape:
        raise ShapeMismatch(
            f"direction shape {direction.data.shape} does not match scores {eps_neutral.shape}"
        )
    m = spec.resolve_middle(eps_neutral.frames)
    scales = signed_scale_profile(spec, eps_neutral.frames)
    out = eps_neutral.data + scales[:, None] * direction.data
    out[m] = eps_neutral.data[m]
    return LatentVideo(out)


def interpolated_condition_epsilon(
    zt: LatentVideo,
    t: int,
    cond_initial: str,
    cond_final: str,
    denoiser: Denoiser,
) -> LatentVideo:
    """Per-frame convex blend of the two conditional scores (baseline).

    Frame j uses (1 - lambda_j) * eps(z_t, initial) + lambda_j * eps(z_t, final)
    with lambda_j = j / (F - 1).
    """
    if zt.frames < 2:
        raise ShapeMismatch("prompt interpolation needs at least two frames")
    eps_i = denoiser.evaluate(zt, t, cond_initial).data
    eps_f = denoiser.evaluate(zt, t, cond_final).data
    lam = (np.arange(zt.frames) / (zt.frames - 1))[:, None]
    return LatentVideo((1.0 - lam) * eps_i + lam * eps_f)
