"""Belief updates: Gaussian position correction and discrete type correction.

The position filter assumes static holes (identity dynamics), so an update is
a pure measurement correction:

    K  = Sigma (R + Sigma)^-1
    mu' = mu + K h
    Sigma' = (I - K) Sigma

The type filter is an exact discrete Bayes step whose evidence combines the
binary match observation (via the learned confusion model) with the attempt
outcome (via the task transition model: a matched attempt succeeds with rate
alpha, a mismatched one never does).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .beliefs import GaussianBelief2, HoleBelief, PegType, TypeBelief, normalize_probs
from .errors import DegenerateEvidenceError, InvalidInputError

MATCH_PROB_EPS = 1e-6
DEGENERATE_ETA = 1e-300
REGULARIZER = 1e-12


@dataclass(frozen=True)
class PositionNoiseModel:
    """Measurement covariance R of the virtual position sensor [m^2]."""

    cov: np.ndarray

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (2, 2) or not np.all(np.isfinite(cov)):
            raise InvalidInputError("noise covariance must be a finite 2x2 matrix")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise InvalidInputError("noise covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < REGULARIZER:
            raise InvalidInputError("noise covariance must have eigenvalues >= 1e-12")
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class MatchObservationModel:
    """Confusion model of the binary match sensor.

    tpr = P(observe match | types match), fpr = P(observe match | mismatch).
    Probabilities are kept away from {0, 1} so log-evidence stays finite.
    """

    tpr: float
    fpr: float

    def __post_init__(self):
        for name, v in (("tpr", self.tpr), ("fpr", self.fpr)):
            if not MATCH_PROB_EPS <= v <= 1.0 - MATCH_PROB_EPS:
                raise InvalidInputError(
                    f"{name}={v} outside [{MATCH_PROB_EPS}, {1 - MATCH_PROB_EPS}]"
                )

    def prob_observation(self, o_match: bool, types_match: bool) -> float:
        p_match = self.tpr if types_match else self.fpr
        return p_match if o_match else 1.0 - p_match


UNINFORMATIVE_MATCH_MODEL = MatchObservationModel(tpr=0.5, fpr=0.5)


class FilterModels(NamedTuple):
    """The learned parameters both filters consume."""

    position: PositionNoiseModel
    match: MatchObservationModel


@dataclass(frozen=True)
class Innovation:
    """Virtual position sensor output: observed position minus current mean."""

    value: np.ndarray

    def __post_init__(self):
        value = np.array(self.value, dtype=float)
        if value.shape != (2,) or not np.all(np.isfinite(value)):
            raise InvalidInputError("innovation must be a finite 2-vector")
        value.setflags(write=False)
        object.__setattr__(self, "value", value)


def kalman_update(
    prior: GaussianBelief2, innovation: Innovation, noise: PositionNoiseModel
) -> GaussianBelief2:
    """Measurement correction of a position belief."""
    sigma = prior.cov
    s = noise.cov + sigma
    if abs(float(np.linalg.det(s))) < DEGENERATE_ETA:
        s = s + REGULARIZER * np.eye(2)
    gain = np.linalg.solve(s.T, sigma.T).T  # Sigma S^-1 without forming S^-1
    mean = prior.mean + gain @ innovation.value
    cov = (np.eye(2) - gain) @ sigma
    cov = 0.5 * (cov + cov.T)  # symmetrize against floating-point drift
    return GaussianBelief2(mean=mean, cov=cov)


def transition_prob(beta_next: bool, types_match: bool, alpha: float) -> float:
    """Task dynamics for one attempt on an unfitted hole."""
    p_success = alpha if types_match else 0.0
    return p_success if beta_next else 1.0 - p_success


def histogram_update(
    prior: TypeBelief,
    o_match: bool,
    beta_next: bool,
    peg: PegType,
    alpha: float,
    model: MatchObservationModel,
) -> TypeBelief:
    """Exact Bayes posterior over hole types after one attempt."""
    if not 0.0 < alpha <= 1.0:
        raise InvalidInputError("alpha must lie in (0, 1]")
    probs = prior.probs
    weights = np.empty_like(probs)
    for idx in range(probs.size):
        types_match = (idx + 1) == peg.value
        h = model.prob_observation(o_match, types_match)
        t = transition_prob(beta_next, types_match, alpha)
        weights[idx] = h * t * probs[idx]
    eta = float(weights.sum())
    if eta <= DEGENERATE_ETA:
        raise DegenerateEvidenceError("evidence annihilated the type belief")
    return TypeBelief(weights / eta)


def batch_update(
    beliefs: list[HoleBelief],
    chosen: int,
    innovation: Innovation,
    o_match: bool,
    beta_next: bool,
    peg: PegType,
    alpha: float,
    models: FilterModels,
) -> list[HoleBelief]:
    """Apply both filters to the interacted hole; all others pass through.

    Mismatched holes yield no information, so only index `chosen` changes.
    The stored type posterior is floored (see `normalize_probs`) to keep
    future updates non-degenerate.
    """
    if not 0 <= chosen < len(beliefs):
        raise InvalidInputError(f"chosen index {chosen} out of range")
    target = beliefs[chosen]
    position = kalman_update(target.position, innovation, models.position)
    type_posterior = histogram_update(
        target.type_belief, o_match, beta_next, peg, alpha, models.match
    )
    updated = HoleBelief(
        position=position,
        type_belief=TypeBelief(normalize_probs(type_posterior.probs)),
        fitted=target.fitted or beta_next,
    )
    return [updated if i == chosen else b for i, b in enumerate(beliefs)]
