"""Denoiser contract and an exact analytic implementation for Gaussian data.

A denoiser maps (z_t, t, condition) to a noise estimate of the same shape.
It plays the role of the score, up to scaling:

    eps(z_t, c) = -sigma_t * grad_{z_t} log p(z_t | c)

For a clean-data conditional N(mu_c, diag(s_c^2)), the noisy marginal at
step t is N(sqrt(abar_t) * mu_c, abar_t * s_c^2 + (1 - abar_t)) per
coordinate, so the noise estimate is available in closed form:

    eps = sigma_t * (z - sqrt(abar_t) * mu_c) / (abar_t * s_c^2 + 1 - abar_t)

This gives the guidance math an exact ground truth: every identity can be
checked against finite differences of the true log-density.

Conditions are referenced by opaque string ids. Each id maps to one
Gaussian applied identically to every frame (one prompt conditions the
whole video); the ``null`` id stands for the unconditional score and
defaults to the equal-weight mixture of all registered conditions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy.special import softmax

from .diffusion import LatentVideo, NoiseSchedule, _frozen
from .errors import (
    ConfigError,
    DimMismatch,
    EmptyMixture,
    NonPositiveVariance,
    WeightsNotNormalized,
)

# Well-known condition ids; any other string is a custom condition.
COND_INITIAL = "initial"
COND_FINAL = "final"
COND_NEUTRAL = "neutral"
COND_NULL = "null"

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class GaussianCondition:
    """A diagonal Gaussian over clean per-frame latents: N(mean, diag(var))."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.var, dtype=np.float64))
        if mean.ndim != 1 or var.ndim != 1 or mean.shape != var.shape:
            raise DimMismatch(
                f"mean and var must be 1-D vectors of equal length, got {mean.shape} and {var.shape}"
            )
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(var)):
            raise NonPositiveVariance("condition parameters must be finite")
        if not np.all(var > 0.0):
            raise NonPositiveVariance(f"variances must be strictly positive, got {var}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "var", _frozen(var))

    @property
    def dim(self) -> int:
        return len(self.mean)


class Denoiser(Protocol):
    """Contract: a pure, shape-preserving noise estimator.

    ``evaluate`` must be deterministic given (zt, t, condition) and return a
    finite latent of the same shape.
    """

    def evaluate(self, zt: LatentVideo, t: int, condition: str) -> LatentVideo: ...


def _check_dims(zt: LatentVideo, cond: GaussianCondition) -> None:
    if cond.dim != zt.dim:
        raise DimMismatch(f"condition dim {cond.dim} does not match latent dim {zt.dim}")


def analytic_epsilon(
    zt: LatentVideo, t: int, cond: GaussianCondition, sched: NoiseSchedule
) -> LatentVideo:
    """Exact noise estimate for a single Gaussian condition.

    Per coordinate i of frame j:
        eps = sigma_t * (z - sqrt(abar_t) * mu_i) / (abar_t * s_i^2 + 1 - abar_t)
    """
    _check_dims(zt, cond)
    sched.require_step(t)
    abar = sched.alpha_bar[t]
    marginal_var = abar * cond.var + (1.0 - abar)  # (D,)
    resid = zt.data - np.sqrt(abar) * cond.mean[None, :]
    return LatentVideo(sched.sigma[t] * resid / marginal_var[None, :])


def null_condition_epsilon(
    zt: LatentVideo,
    t: int,
    mixture: Sequence[tuple[float, GaussianCondition]],
    sched: NoiseSchedule,
) -> LatentVideo:
    """Exact noise estimate of a Gaussian-mixture marginal.

    The mixture is over clean-data conditionals; each component's noisy
    marginal at step t is N(sqrt(abar_t)*mu_k, abar_t*s_k^2 + 1 - abar_t).
    Component responsibilities are computed per frame with log-sum-exp
    stabilization, so widely separated components stay numerically exact.
    """
    if len(mixture) == 0:
        raise EmptyMixture("mixture must have at least one component")
    weights = np.array([w for w, _ in mixture], dtype=np.float64)
    if not np.all(weights > 0.0):
        raise WeightsNotNormalized(f"mixture weights must be positive, got {weights}")
    if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise WeightsNotNormalized(f"mixture weights sum to {weights.sum()}, expected 1")
    for _, cond in mixture:
        _check_dims(zt, cond)
    sched.require_step(t)

    abar = sched.alpha_bar[t]
    a = np.sqrt(abar)
    means = np.stack([c.mean for _, c in mixture])  # (K, D)
    mvar = abar * np.stack([c.var for _, c in mixture]) + (1.0 - abar)  # (K, D)

    resid = zt.data[:, None, :] - a * means[None, :, :]  # (F, K, D)
    log_comp = -0.5 * np.sum(resid**2 / mvar[None, :, :] + np.log(2.0 * np.pi * mvar)[None, :, :], axis=2)
    resp = softmax(np.log(weights)[None, :] + log_comp, axis=1)  # (F, K)
    score_terms = resid / mvar[None, :, :]  # (F, K, D)
    eps = sched.sigma[t] * np.sum(resp[:, :, None] * score_terms, axis=1)
    return LatentVideo(eps)


class GaussianScoreDenoiser:
    """Denoiser backed by exact Gaussian conditionals.

    Resolves registered condition ids to single-Gaussian scores and the
    ``null`` id to the mixture marginal (equal weights over all registered
    conditions unless an explicit mixture is supplied). Immutable after
    construction; ``evaluate`` is pure and reentrant.
    """

    def __init__(
        self,
        conditions: Mapping[str, GaussianCondition],
        schedule: NoiseSchedule,
        null_mixture: Sequence[tuple[float, GaussianCondition]] | None = None,
    ):
        if not conditions:
            raise ConfigError("denoiser needs at least one registered condition")
        dims = {c.dim for c in conditions.values()}
        if len(dims) != 1:
            raise DimMismatch(f"registered conditions disagree on dim: {sorted(dims)}")
        self._conditions = dict(conditions)
        self._schedule = schedule
        if null_mixture is None:
            k = len(self._conditions)
            null_mixture = [(1.0 / k, c) for c in self._conditions.values()]
        self._null_mixture = list(null_mixture)

    @property
    def schedule(self) -> NoiseSchedule:
        return self._schedule

    @property
    def condition_ids(self) -> tuple[str, ...]:
        return tuple(self._conditions)

    def condition(self, condition_id: str) -> GaussianCondition:
        try:
            return self._conditions[condition_id]
        except KeyError:
            raise ConfigError(
                f"unknown condition {condition_id!r}; registered: {sorted(self._conditions)}"
            ) from None

    def evaluate(self, zt: LatentVideo, t: int, condition: str) -> LatentVideo:
        if condition == COND_NULL:
            return null_condition_epsilon(zt, t, self._null_mixture, self._schedule)
        return analytic_epsilon(zt, t, self.condition(condition), self._schedule)
