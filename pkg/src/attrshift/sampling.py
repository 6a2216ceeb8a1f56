"""Reverse-diffusion sampling with two-phase transition guidance.

A run proceeds from t = T down to t = 1. For the transition modes the first
``tau`` steps are warmup: plain classifier-free guidance under the neutral
prompt, fixing the overall layout before any attribute steering. Every later
step builds the transitional direction, refines the per-frame scores
(anchored or naive), and applies classifier-free guidance over the refined
score against the unconditional one.

Baseline modes skip the two-phase flow: ``single_prompt`` is plain CFG with
one condition throughout, ``prompt_interpolation`` blends the two
conditional scores per frame throughout.

Updates consume the guided noise estimate with either a DDIM step
(deterministic at eta = 0, so score-space identities survive the whole
chain) or a DDPM ancestral step.

Per-step denoiser cost after warmup in ours_anchored mode is 4 evaluations
(initial, final, neutral, null).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .denoisers import COND_FINAL, COND_INITIAL, COND_NEUTRAL, COND_NULL, Denoiser
from .diffusion import LatentVideo, NoiseSchedule, Rng
from .errors import ConfigError, StepOutOfRange
from .guidance import (
    GuidanceSpec,
    TransitionalDirection,
    cfg_epsilon,
    interpolated_condition_epsilon,
    refined_epsilon_anchored,
    refined_epsilon_naive,
    transitional_direction,
)

if TYPE_CHECKING:
    from .scenarios import ScenarioSpec

SAMPLER_NAMES = ("ddim", "ddpm")


@dataclass(frozen=True)
class SamplerKind:
    """Reverse-update rule: deterministic DDIM (eta in [0, 1]) or DDPM ancestral."""

    name: str = "ddim"
    eta: float = 0.0

    def __post_init__(self) -> None:
        if self.name not in SAMPLER_NAMES:
            raise ConfigError(f"unknown sampler {self.name!r}; expected one of {SAMPLER_NAMES}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")


@dataclass(frozen=True)
class Trajectory:
    """A full denoising path: states[t] is the latent at timestep t.

    Length is T + 1; states[T] is the initial noise and states[0] the final
    clean sample.
    """

    states: tuple[LatentVideo, ...]
    mode: str
    seed: int

    @property
    def final(self) -> LatentVideo:
        return self.states[0]

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    def frame_series(self, frame: int) -> np.ndarray:
        """The (T+1, D) path of one frame, ordered t = T .. 0."""
        return np.stack([z.data[frame] for z in reversed(self.states)])


def step(
    zt: LatentVideo,
    t: int,
    eps_hat: LatentVideo,
    sched: NoiseSchedule,
    kind: SamplerKind,
    rng: Rng,
) -> LatentVideo:
    """One reverse update from timestep t to t - 1 consuming eps_hat."""
    sched.require_step(t)
    zt.require_same_shape(eps_hat, "noise estimate")
    abar_t = sched.alpha_bar[t]
    abar_prev = sched.alpha_bar[t - 1]

    if kind.name == "ddim":
        x0 = (zt.data - sched.sigma[t] * eps_hat.data) / np.sqrt(abar_t)
        sigma_tilde = kind.eta * np.sqrt(
            (1.0 - abar_prev) / (1.0 - abar_t) * (1.0 - abar_t / abar_prev)
        )
        out = (
            np.sqrt(abar_prev) * x0
            + np.sqrt(max(1.0 - abar_prev - sigma_tilde**2, 0.0)) * eps_hat.data
        )
        if kind.eta > 0.0 and t > 1:
            out = out + sigma_tilde * rng.normal(zt.shape)
        return LatentVideo(out)

    # DDPM ancestral: posterior mean, plus posterior noise except at the last step.
    beta_t = sched.beta[t]
    alpha_t = sched.alpha[t]
    mean = (zt.data - beta_t / sched.sigma[t] * eps_hat.data) / np.sqrt(alpha_t)
    if t > 1:
        post_var = beta_t * (1.0 - abar_prev) / (1.0 - abar_t)
        mean = mean + np.sqrt(post_var) * rng.normal(zt.shape)
    return LatentVideo(mean)


def _required_conditions(spec: GuidanceSpec) -> tuple[str, ...]:
    if spec.mode in ("ours_anchored", "naive_additive"):
        needed = [COND_INITIAL, COND_FINAL]
        if spec.mode == "ours_anchored" or spec.tau > 0:
            needed.append(COND_NEUTRAL)
        return tuple(needed)
    if spec.mode == "single_prompt":
        return (spec.single_condition,)
    return (COND_INITIAL, COND_FINAL)  # prompt_interpolation


def _guided_epsilon(
    zt: LatentVideo,
    t: int,
    spec: GuidanceSpec,
    denoiser: Denoiser,
    in_warmup: bool,
    direction: TransitionalDirection | None,
) -> tuple[LatentVideo, TransitionalDirection | None]:
    """Guided noise estimate for one step; returns (eps_tilde, direction)."""
    eps_null = denoiser.evaluate(zt, t, COND_NULL)

    if spec.mode == "single_prompt":
        eps_cond = denoiser.evaluate(zt, t, spec.single_condition)
        return cfg_epsilon(eps_cond, eps_null, spec.omega), direction

    if spec.mode == "prompt_interpolation":
        eps_hat = interpolated_condition_epsilon(zt, t, COND_INITIAL, COND_FINAL, denoiser)
        return cfg_epsilon(eps_hat, eps_null, spec.omega), direction

    if in_warmup:
        eps_neutral = denoiser.evaluate(zt, t, COND_NEUTRAL)
        return cfg_epsilon(eps_neutral, eps_null, spec.omega), direction

    if direction is None or not spec.freeze_direction:
        direction = transitional_direction(
            zt, t, COND_INITIAL, COND_FINAL, denoiser, per_frame_norm=spec.per_frame_norm
        )
    if spec.mode == "ours_anchored":
        eps_hat = refined_epsilon_anchored(denoiser.evaluate(zt, t, COND_NEUTRAL), direction, spec)
    else:
        eps_hat = refined_epsilon_naive(denoiser.evaluate(zt, t, COND_INITIAL), direction, spec)
    return cfg_epsilon(eps_hat, eps_null, spec.omega), direction


def sample_video(
    spec: GuidanceSpec,
    kind: SamplerKind,
    scenario: "ScenarioSpec",
    denoiser: Denoiser,
    sched: NoiseSchedule,
    rng: Rng,
) -> Trajectory:
    """Run the full reverse chain for one scenario and one guidance mode."""
    steps = sched.steps
    if spec.tau > steps:
        raise StepOutOfRange(f"tau {spec.tau} exceeds schedule steps {steps}")
    missing = [c for c in _required_conditions(spec) if c not in scenario.conditions]
    if missing:
        raise ConfigError(
            f"mode {spec.mode!r} needs conditions {missing} missing from scenario {scenario.id!r}"
        )
    spec.resolve_middle(scenario.frames)

    z = rng.normal_latent(scenario.frames, scenario.dim)
    states: list[LatentVideo | None] = [None] * (steps + 1)
    states[steps] = z
    direction: TransitionalDirection | None = None
    for t in range(steps, 0, -1):
        in_warmup = (steps - t) < spec.tau
        eps_tilde, direction = _guided_epsilon(z, t, spec, denoiser, in_warmup, direction)
        z = step(z, t, eps_tilde, sched, kind, rng)
        states[t - 1] = z
    return Trajectory(states=tuple(states), mode=spec.mode, seed=rng.seed)  # type: ignore[arg-type]
