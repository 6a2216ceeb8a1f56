"""Latent containers, noise schedules, and the forward corruption process.

The forward process is the standard variance-preserving one:

    z_t = sqrt(abar_t) * z_0 + sqrt(1 - abar_t) * eps,   eps ~ N(0, I)

with ``abar_t`` the cumulative product of per-step alphas. Timesteps are
1-based: t = 1..T are diffusion steps, t = 0 is reserved for the clean
sample (abar_0 = 1, sigma_0 = 0).

Everything here is an immutable value after construction and safe to share
read-only across workers; each trajectory owns its :class:`Rng`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidScheduleParams, ShapeMismatch, StepOutOfRange

SCHEDULE_KINDS = ("linear", "scaled_linear")

# abar[t] must equal abar[t-1] * alpha[t] to this absolute tolerance.
ALPHA_BAR_CONSISTENCY_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class LatentVideo:
    """An F-frame sequence of D-dimensional latent vectors.

    Shape is (frames, dim); values are double precision and must be finite.
    Instances are immutable; per-frame operations return new instances of
    the same shape.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(
                f"latent video must be a (frames, dim) array with frames,dim >= 1, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ShapeMismatch("latent video contains non-finite values")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def require_same_shape(self, other: "LatentVideo", what: str = "operand") -> None:
        if self.shape != other.shape:
            raise ShapeMismatch(f"{what}: shape {other.shape} does not match {self.shape}")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep beta/alpha/abar/sigma arrays for a T-step diffusion.

    Arrays have length T+1 and are indexed by timestep, with the t=0 slots
    holding the clean-sample extension (beta_0 = 0, alpha_0 = 1, abar_0 = 1,
    sigma_0 = 0).
    """

    beta: np.ndarray
    alpha: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("beta", "alpha", "alpha_bar", "sigma"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def steps(self) -> int:
        """Total step count T."""
        return len(self.beta) - 1

    def require_step(self, t: int, allow_zero: bool = False) -> None:
        lo = 0 if allow_zero else 1
        if not isinstance(t, (int, np.integer)) or not lo <= t <= self.steps:
            raise StepOutOfRange(f"timestep {t} outside [{lo}, {self.steps}]")

    def validate(self) -> None:
        """Check the schedule invariants; raises InvalidScheduleParams."""
        t = slice(1, None)
        if self.steps < 1:
            raise InvalidScheduleParams("schedule must have at least one step")
        if not np.all((self.beta[t] > 0.0) & (self.beta[t] < 1.0)):
            raise InvalidScheduleParams("beta values must lie in (0, 1)")
        if not np.all(np.diff(self.alpha_bar) < 0.0):
            raise InvalidScheduleParams("alpha_bar must be strictly decreasing")
        if not np.all(np.diff(self.sigma) > 0.0):
            raise InvalidScheduleParams("sigma must be strictly increasing")
        recomputed = self.alpha_bar[:-1] * self.alpha[1:]
        if not np.all(np.abs(recomputed - self.alpha_bar[1:]) <= ALPHA_BAR_CONSISTENCY_TOL):
            raise InvalidScheduleParams("alpha_bar is not the running product of alpha")


def schedule_from_betas(betas: np.ndarray) -> NoiseSchedule:
    """Build a schedule from an explicit per-step beta array (length T >= 1)."""
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or len(betas) < 1:
        raise InvalidScheduleParams("betas must be a 1-D array with at least one entry")
    beta = np.concatenate([[0.0], betas])
    alpha = 1.0 - beta
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha[1:])])
    sigma = np.sqrt(1.0 - alpha_bar)
    sched = NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma)
    sched.validate()
    return sched


def build_schedule(
    steps: int,
    beta_start: float = 1e-4,
    beta_end: float = 2e-2,
    kind: str = "linear",
) -> NoiseSchedule:
    """Construct a T-step noise schedule.

    ``linear`` spaces beta evenly between the bounds; ``scaled_linear``
    spaces sqrt(beta) evenly (the square-root spacing used by latent
    diffusion backbones).
    """
    if not isinstance(steps, (int, np.integer)) or steps < 2:
        raise InvalidScheduleParams(f"steps must be an integer >= 2, got {steps!r}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise InvalidScheduleParams(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if kind not in SCHEDULE_KINDS:
        raise InvalidScheduleParams(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, steps)
    else:
        betas = np.linspace(beta_start**0.5, beta_end**0.5, steps) ** 2
    return schedule_from_betas(betas)


def q_sample(z0: LatentVideo, t: int, eps: LatentVideo, sched: NoiseSchedule) -> LatentVideo:
    """Forward-corrupt a clean latent to timestep t.

    Returns sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps. Accepts t = 0 as the
    clean-sample extension (returns z0 unchanged).
    """
    z0.require_same_shape(eps, "q_sample noise")
    sched.require_step(t, allow_zero=True)
    a = np.sqrt(sched.alpha_bar[t])
    b = np.sqrt(1.0 - sched.alpha_bar[t])
    return LatentVideo(a * z0.data + b * eps.data)


@dataclass
class Rng:
    """Seeded random source; one instance per trajectory, never shared.

    The same seed and call sequence reproduce draws bit-for-bit.
    """

    seed: int

    def __post_init__(self) -> None:
        self._gen = np.random.default_rng(np.random.SeedSequence(int(self.seed)))

    def normal(self, shape: tuple[int, ...]) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def normal_latent(self, frames: int, dim: int) -> LatentVideo:
        return LatentVideo(self.normal((frames, dim)))


def derive_seed(master_seed: int, *parts: object) -> int:
    """Derive a child seed deterministically from a master seed and key parts.

    Stable across platforms and runs: hashes the canonical string form of the
    parts with SHA-256 and folds in the master seed.
    """
    key = "\x1f".join(str(p) for p in (master_seed, *parts))
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1  # 63-bit, non-negative
