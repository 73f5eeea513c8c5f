"""Kinematic 2D peg-in-hole world.

The table surface is the z=0 plane and holes live at known-z positions on it.
The end effector is a point tip driven by position deltas; commanded motion
below the surface becomes penetration (and a spring force reading) instead of
displacement.  A matched rollout inserts when the tip enters the capture disk
around the true hole position while the rollout's alignment draw is good; the
alignment rate is the position-independent component of low-level success,
the capture disk the position-dependent one.

Every rollout consumes its RNG in a fixed order (alignment draw, wiggle
block, force-noise block), so identical seeds give identical traces no matter
how the rollout terminates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beliefs import EnvConfig, HoleGroundTruth, PegType
from .errors import ConfigurationError, InvalidInputError

FORCE_SPRING_K = 100.0  # N/m, spring response while pressing
FORCE_NOISE_SD = 0.5    # N, per-axis sensor noise

MAX_PLACEMENT_ATTEMPTS = 1000


@dataclass(frozen=True)
class SpiralParams:
    """Low-level search policy parameters."""

    r_max: float = 0.015
    n_rot: int = 2
    delta_z: float = 0.004
    sigma_wiggle: float = 0.00125

    def __post_init__(self):
        if min(self.r_max, self.delta_z) <= 0.0 or self.n_rot < 1:
            raise ConfigurationError("spiral parameters must be positive")
        if self.sigma_wiggle < 0.0:
            raise ConfigurationError("wiggle scale must be >= 0")


@dataclass(frozen=True)
class TraceStep:
    """One recorded control step: state after the move, command, contact, force."""

    ee_position: np.ndarray
    command: np.ndarray
    contact: bool
    force: np.ndarray
    index: int


@dataclass(frozen=True)
class SensorimotorTrace:
    steps: tuple[TraceStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise InvalidInputError("trace must contain at least one step")
        indices = [s.index for s in self.steps]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise InvalidInputError("trace indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.steps)

    def positions_xy(self) -> np.ndarray:
        return np.array([s.ee_position[:2] for s in self.steps])

    def closest_approach(self, point) -> float:
        """Smallest tip distance to a 2D point over the whole trace."""
        deltas = self.positions_xy() - np.asarray(point, dtype=float)
        return float(np.sqrt((deltas ** 2).sum(axis=1)).min())


@dataclass(frozen=True)
class RolloutOutcome:
    success: bool
    trace: SensorimotorTrace
    insertion_step: int | None
    final_ee: np.ndarray

    def __post_init__(self):
        if self.success != (self.insertion_step is not None):
            raise InvalidInputError("success iff insertion_step present")
        if self.insertion_step is not None and self.insertion_step >= len(self.trace):
            raise InvalidInputError("insertion step beyond trace length")


@dataclass(frozen=True)
class World:
    """Ground-truth hole layout plus the configuration it was built from."""

    holes: tuple[HoleGroundTruth, ...]
    config: EnvConfig

    @property
    def clearance(self) -> float:
        return self.config.clearance

    @property
    def capture_radius(self) -> float:
        return self.config.capture_radius

    @property
    def n_holes(self) -> int:
        return len(self.holes)


def min_hole_separation(config: EnvConfig, params: SpiralParams | None = None) -> float:
    """Pairwise hole distance below which spirals could reach a neighbor."""
    r_max = (params or SpiralParams()).r_max
    return 2.0 * (r_max + config.capture_radius)


def spawn_world(
    config: EnvConfig,
    rng: np.random.Generator,
    params: SpiralParams | None = None,
) -> World:
    """Sample a hole layout satisfying the separation invariant.

    Types cover min(n_holes, n_types) distinct values so that any peg drawn
    from the present types has a matching hole; extra holes get uniform types.
    """
    params = params or SpiralParams()
    sep = min_hole_separation(config, params)
    margin = config.detector_error_bound + params.r_max
    lo = np.asarray(config.workspace_min) + margin
    hi = np.asarray(config.workspace_max) - margin
    if np.any(hi <= lo):
        raise ConfigurationError("workspace too small for placement margin")

    positions: list[np.ndarray] = []
    attempts = 0
    while len(positions) < config.n_holes:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            raise ConfigurationError(
                f"could not place {config.n_holes} holes at separation {sep:.3f} m"
            )
        attempts += 1
        cand = rng.uniform(lo, hi)
        if all(np.linalg.norm(cand - q) >= sep for q in positions):
            positions.append(cand)

    covered = [int(t) for t in rng.permutation(config.n_types) + 1]
    types = covered[: min(config.n_holes, config.n_types)]
    while len(types) < config.n_holes:
        types.append(int(rng.integers(1, config.n_types + 1)))
    order = rng.permutation(config.n_holes)
    holes = tuple(
        HoleGroundTruth(hole_type=types[k], position=positions[k]) for k in order
    )
    return World(holes=holes, config=config)


def vision_detect(world: World, rng: np.random.Generator) -> list[np.ndarray]:
    """Noisy detections: truth plus independent per-axis uniform error."""
    b = world.config.detector_error_bound
    return [hole.position + rng.uniform(-b, b, 2) for hole in world.holes]


def _spiral_offset(j: int, horizon: int, params: SpiralParams) -> np.ndarray:
    radius = j * params.r_max / horizon
    angle = 2.0 * math.pi * j * params.n_rot / horizon
    return np.array(
        [radius * math.cos(angle), radius * math.sin(angle), -params.delta_z]
    )


def _command(ee, target_estimate, j, horizon, params, wiggle) -> np.ndarray:
    """Spiral-search command: spiral offset + wiggle + pull back to estimate."""
    wiggle = np.array(wiggle, dtype=float)
    wiggle[2] = abs(wiggle[2])
    target = np.array([target_estimate[0], target_estimate[1], 0.0])
    return _spiral_offset(j, horizon, params) + wiggle + (target - np.asarray(ee))


def spiral_command(
    ee,
    target_estimate,
    j: int,
    horizon: int,
    params: SpiralParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """One command of the spiral search policy at step j."""
    if not 0 <= j <= horizon:
        raise InvalidInputError(f"step index {j} outside 0..{horizon}")
    wiggle = rng.normal(0.0, params.sigma_wiggle, 3)
    return _command(ee, target_estimate, j, horizon, params, wiggle)


def _integrate(
    start_estimate,
    peg: PegType,
    hole: HoleGroundTruth,
    horizon: int,
    rng: np.random.Generator,
    command_fn,
    *,
    capture_radius: float,
    alignment_rate: float,
    workspace: tuple | None,
) -> RolloutOutcome:
    start_estimate = np.asarray(start_estimate, dtype=float)
    if start_estimate.shape != (2,) or not np.all(np.isfinite(start_estimate)):
        raise InvalidInputError("start estimate must be a finite 2-vector")
    aligned = bool(rng.random() < alignment_rate)
    wiggles = rng.normal(0.0, 1.0, (horizon, 3))
    force_noise = rng.normal(0.0, FORCE_NOISE_SD, (horizon, 3))

    ee = np.array([start_estimate[0], start_estimate[1], 0.0])
    can_insert = aligned and peg.value == hole.hole_type
    steps: list[TraceStep] = []
    insertion_step = None
    for j in range(horizon):
        u = command_fn(j, ee, wiggles[j])
        raw_z = ee[2] + u[2]
        ee = ee + u
        if workspace is not None:
            ee[:2] = np.clip(ee[:2], workspace[0], workspace[1])
        penetration = max(0.0, -raw_z)
        ee[2] = max(0.0, raw_z)
        contact = u[2] < 0.0
        force = force_noise[j] + np.array([0.0, 0.0, FORCE_SPRING_K * penetration])
        steps.append(
            TraceStep(
                ee_position=ee.copy(),
                command=np.asarray(u, dtype=float),
                contact=contact,
                force=force,
                index=j,
            )
        )
        if can_insert and np.linalg.norm(ee[:2] - hole.position) <= capture_radius:
            insertion_step = j
            break
    return RolloutOutcome(
        success=insertion_step is not None,
        trace=SensorimotorTrace(tuple(steps)),
        insertion_step=insertion_step,
        final_ee=steps[-1].ee_position,
    )


def rollout_low_level(
    start_estimate,
    peg: PegType,
    hole: HoleGroundTruth,
    params: SpiralParams,
    horizon: int,
    rng: np.random.Generator,
    *,
    capture_radius: float,
    alignment_rate: float = 1.0,
    workspace: tuple | None = None,
) -> RolloutOutcome:
    """Run the spiral search around a position estimate until insertion or timeout."""

    def command_fn(j, ee, unit_wiggle):
        return _command(ee, start_estimate, j, horizon, params, params.sigma_wiggle * unit_wiggle)

    return _integrate(
        start_estimate, peg, hole, horizon, rng, command_fn,
        capture_radius=capture_radius,
        alignment_rate=alignment_rate,
        workspace=workspace,
    )


def rollout_random_actions(
    start_estimate,
    peg: PegType,
    hole: HoleGroundTruth,
    params: SpiralParams,
    horizon: int,
    rng: np.random.Generator,
    *,
    capture_radius: float,
    alignment_rate: float = 1.0,
    workspace: tuple | None = None,
) -> RolloutOutcome:
    """Exploration rollout for data collection: random wiggles while pressing,
    anchored at the position estimate (no spiral sweep)."""

    def command_fn(j, ee, unit_wiggle):
        wiggle = params.sigma_wiggle * unit_wiggle
        wiggle[2] = abs(wiggle[2])
        target = np.array([start_estimate[0], start_estimate[1], 0.0])
        return np.array([0.0, 0.0, -params.delta_z]) + wiggle + (target - ee)

    return _integrate(
        start_estimate, peg, hole, horizon, rng, command_fn,
        capture_radius=capture_radius,
        alignment_rate=alignment_rate,
        workspace=workspace,
    )


def _matched_pair_rollout(
    config: EnvConfig, params: SpiralParams, rng: np.random.Generator,
    capture_radius: float,
) -> bool:
    """One matched peg/hole attempt started from a detector sample.

    The hole sits at the workspace center so edge clipping cannot skew the
    estimate; success depends only on detector error and rollout noise.
    """
    center = 0.5 * (
        np.asarray(config.workspace_min) + np.asarray(config.workspace_max)
    )
    hole = HoleGroundTruth(hole_type=1, position=center)
    detection = hole.position + rng.uniform(
        -config.detector_error_bound, config.detector_error_bound, 2
    )
    outcome = rollout_low_level(
        detection, PegType(1), hole, params, config.horizon_low, rng,
        capture_radius=capture_radius,
        alignment_rate=config.alignment_rate,
        workspace=(config.workspace_min, config.workspace_max),
    )
    return outcome.success


def calibrate_alpha(
    config: EnvConfig,
    params: SpiralParams,
    trials: int,
    rng: np.random.Generator,
    capture_radius: float | None = None,
) -> float:
    """Empirical matched-pair success rate under detector-noise starts."""
    if trials < 1:
        raise InvalidInputError("need at least one trial")
    cr = config.capture_radius if capture_radius is None else capture_radius
    wins = sum(
        _matched_pair_rollout(config, params, rng, cr) for _ in range(trials)
    )
    return wins / trials


@dataclass(frozen=True)
class CalibrationResult:
    capture_radius: float
    alpha_hat: float
    target: float
    feasible: bool
    trials: int


def capture_radius_bound(config: EnvConfig, params: SpiralParams) -> float:
    """Radius beyond which every in-bound detection is reachable by the spiral."""
    return config.detector_error_bound * math.sqrt(2.0) + params.r_max


def tune_capture_radius(
    config: EnvConfig,
    params: SpiralParams,
    target_alpha: float,
    trials: int,
    rng: np.random.Generator,
    iterations: int = 12,
) -> CalibrationResult:
    """Bisection on the capture radius toward a target matched-pair rate.

    The success rate is monotone in the radius and saturates at the alignment
    rate, so targets above that ceiling clamp to the feasibility bound.
    """
    if not 0.0 < target_alpha <= 1.0:
        raise InvalidInputError("target alpha must lie in (0, 1]")
    seeds = rng.integers(0, 2**63 - 1, iterations + 1)
    lo, hi = 0.0005, capture_radius_bound(config, params)
    hi_rate = calibrate_alpha(
        config, params, trials, np.random.default_rng(seeds[0]), capture_radius=hi
    )
    if target_alpha >= hi_rate:
        return CalibrationResult(hi, hi_rate, target_alpha, feasible=False, trials=trials)
    for k in range(iterations):
        mid = 0.5 * (lo + hi)
        rate = calibrate_alpha(
            config, params, trials, np.random.default_rng(seeds[k + 1]),
            capture_radius=mid,
        )
        if rate < target_alpha:
            lo = mid
        else:
            hi = mid
    tuned = 0.5 * (lo + hi)
    final = calibrate_alpha(config, params, trials, rng, capture_radius=tuned)
    return CalibrationResult(tuned, final, target_alpha, feasible=True, trials=trials)
