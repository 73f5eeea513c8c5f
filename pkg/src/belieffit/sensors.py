"""Parametric virtual sensors that read a rollout trace.

These stand in for learned trace encoders: the position sensor returns a
noisy innovation toward the true hole position, the match sensor a noisy
binary same-type verdict.  Their ground-truth noise parameters live here and
are distinct values from the filter-side learned parameters; training exists
precisely to recover these from interaction data.

A trace that never came close to the hole carries less position signal, so
the position sensor inflates its noise by `uninformative_scale` when the
closest approach exceeds `informative_radius`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beliefs import PegType
from .errors import InvalidInputError
from .filters import Innovation
from .sim import SensorimotorTrace


@dataclass(frozen=True)
class PositionSensorSpec:
    cov: np.ndarray = field(default_factory=lambda: 6.4e-5 * np.eye(2))
    bias: np.ndarray = field(default_factory=lambda: np.zeros(2))
    uninformative_scale: float = 3.0
    informative_radius: float = 0.01125

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        bias = np.array(self.bias, dtype=float)
        if cov.shape != (2, 2) or np.max(np.abs(cov - cov.T)) > 1e-12:
            raise InvalidInputError("sensor covariance must be symmetric 2x2")
        if np.min(np.linalg.eigvalsh(cov)) <= 0.0:
            raise InvalidInputError("sensor covariance must be positive definite")
        if bias.shape != (2,) or not np.all(np.isfinite(bias)):
            raise InvalidInputError("sensor bias must be a finite 2-vector")
        if self.uninformative_scale < 1.0:
            raise InvalidInputError("uninformative scale must be >= 1")
        if self.informative_radius <= 0.0:
            raise InvalidInputError("informative radius must be positive")
        cov.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "bias", bias)


@dataclass(frozen=True)
class MatchSensorSpec:
    tpr: float = 0.85
    fpr: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.fpr < self.tpr < 1.0:
            raise InvalidInputError("need 0 < fpr < tpr < 1 for a useful sensor")


@dataclass(frozen=True)
class SensorModel:
    position: PositionSensorSpec = field(default_factory=PositionSensorSpec)
    match: MatchSensorSpec = field(default_factory=MatchSensorSpec)


def effective_position_cov(
    trace: SensorimotorTrace, true_position, model: SensorModel
) -> np.ndarray:
    """Noise covariance for this trace: base, or scaled up if uninformative."""
    spec = model.position
    if trace.closest_approach(true_position) <= spec.informative_radius:
        return spec.cov
    return (spec.uninformative_scale ** 2) * spec.cov


def sense_position(
    trace: SensorimotorTrace,
    true_position,
    current_mean,
    model: SensorModel,
    rng: np.random.Generator,
) -> Innovation:
    """Noisy innovation (observed position minus current estimate mean)."""
    true_position = np.asarray(true_position, dtype=float)
    current_mean = np.asarray(current_mean, dtype=float)
    cov = effective_position_cov(trace, true_position, model)
    noise = np.linalg.cholesky(cov) @ rng.standard_normal(2)
    observed = true_position + model.position.bias + noise
    return Innovation(observed - current_mean)


def sense_match(
    hole_type: int, peg: PegType, model: SensorModel, rng: np.random.Generator
) -> bool:
    """Noisy binary verdict on whether the hole's type matches the peg's."""
    if hole_type < 1:
        raise InvalidInputError("hole type must be a positive integer")
    p = model.match.tpr if hole_type == peg.value else model.match.fpr
    return bool(rng.random() < p)
