"""High-level task policy: greedy hole selection and the attempt loop.

Each high-level step picks the hole with the best predicted fit probability,
moves to a start estimate chosen by the active variant, runs one low-level
rollout, and updates the chosen hole's belief from the outcome.  Variants
differ only in which information they feed back:

  FULL_APPROACH         position innovation + match verdict + outcome
  FAILURE_PLUS_POSITION position innovation + outcome (no match verdict)
  FAILURE_ONLY          outcome only (beliefs about position never move)
  FRAME_BY_FRAME        replaces the position mean with the fresh sensor
                        estimate each step; covariance and types untouched
  FIXED_INITIAL         no feedback; always starts at the initial estimate
  SAMPLED_INITIAL       no feedback; starts at a draw from the initial belief
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace

import numpy as np

from .beliefs import (
    EnvConfig,
    GaussianBelief2,
    HoleBelief,
    PegType,
    TypeBelief,
    fit_probability,
    init_position_belief,
    init_type_belief_uniform,
    normalize_probs,
)
from .errors import DegenerateEvidenceError, InvalidInputError, NoActionError
from .filters import (
    FilterModels,
    Innovation,
    PositionNoiseModel,
    UNINFORMATIVE_MATCH_MODEL,
    histogram_update,
    kalman_update,
)
from .sensors import SensorModel, sense_match, sense_position
from .sim import SpiralParams, World, rollout_low_level, vision_detect

logger = logging.getLogger(__name__)

# Insertion pins down the hole position; treat the final tip position as a
# (numerically) noise-free observation of it.
INSERTION_NOISE = PositionNoiseModel(1e-12 * np.eye(2))


class PolicyVariant(enum.Enum):
    FULL_APPROACH = "full_approach"
    FAILURE_PLUS_POSITION = "failure_plus_position"
    FAILURE_ONLY = "failure_only"
    FRAME_BY_FRAME = "frame_by_frame"
    FIXED_INITIAL = "fixed_initial"
    SAMPLED_INITIAL = "sampled_initial"

    @property
    def updates_position(self) -> bool:
        return self in (
            PolicyVariant.FULL_APPROACH,
            PolicyVariant.FAILURE_PLUS_POSITION,
            PolicyVariant.FRAME_BY_FRAME,
        )

    @property
    def updates_types(self) -> bool:
        return self in (
            PolicyVariant.FULL_APPROACH,
            PolicyVariant.FAILURE_PLUS_POSITION,
            PolicyVariant.FAILURE_ONLY,
        )


@dataclass(frozen=True)
class PolicyModels:
    """Everything a step needs besides the world: controller parameters,
    ground-truth sensors, and the filters' learned parameters."""

    spiral: SpiralParams
    sensor: SensorModel
    filters: FilterModels


@dataclass(frozen=True)
class StepRecord:
    t: int
    chosen: int
    start_estimate: np.ndarray
    beta: bool
    belief: HoleBelief
    pos_error: float
    evidence_reset: bool = False

    @property
    def reward(self) -> float:
        return 1.0 if self.beta else 0.0


class TerminalStatus(str, enum.Enum):
    SUCCESS = "success"
    STEP_CAP = "step_cap"
    INTERVENTION = "intervention"


@dataclass
class EpisodeLog:
    peg: PegType
    records: list[StepRecord]
    status: TerminalStatus
    initial_beliefs: list[HoleBelief]
    final_beliefs: list[HoleBelief]

    @property
    def attempts(self) -> int:
        return len(self.records)


@dataclass
class AssemblyResult:
    peg_order: list[PegType]
    attempts_per_peg: list[int]
    interventions: int
    episodes: list[EpisodeLog]

    @property
    def cumulative_attempts(self) -> list[int]:
        out, total = [], 0
        for a in self.attempts_per_peg:
            total += a
            out.append(total)
        return out


def init_beliefs(world: World, rng: np.random.Generator) -> list[HoleBelief]:
    """Initial beliefs from one pass of the vision detector."""
    detections = vision_detect(world, rng)
    return [
        HoleBelief(
            position=init_position_belief(det, world.config.sigma_init),
            type_belief=init_type_belief_uniform(world.config.n_types),
            fitted=False,
        )
        for det in detections
    ]


def select_hole(beliefs: list[HoleBelief], peg: PegType, alpha: float) -> int:
    """Greedy argmax of predicted fit probability; ties go to the lowest index."""
    if all(b.fitted for b in beliefs):
        raise NoActionError("every hole is already fitted")
    scores = [fit_probability(b, peg, alpha) for b in beliefs]
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    if beliefs[best].fitted:  # all-zero scores with fitted holes in front
        best = next(i for i, b in enumerate(beliefs) if not b.fitted)
    return best


def _updated_type(
    prior: TypeBelief,
    o_match: bool,
    beta: bool,
    peg: PegType,
    alpha: float,
    model,
) -> tuple[TypeBelief, bool]:
    """Type posterior with the degenerate-evidence fallback (reset + log)."""
    try:
        posterior = histogram_update(prior, o_match, beta, peg, alpha, model)
        return TypeBelief(normalize_probs(posterior.probs)), False
    except DegenerateEvidenceError:
        logger.warning("degenerate type evidence; resetting belief to uniform")
        return init_type_belief_uniform(prior.n_types), True


def high_level_step(
    beliefs: list[HoleBelief],
    peg: PegType,
    world: World,
    variant: PolicyVariant,
    models: PolicyModels,
    rng: np.random.Generator,
) -> tuple[list[HoleBelief], StepRecord]:
    """One choose-hole / rollout / belief-update iteration."""
    config: EnvConfig = world.config
    chosen = select_hole(beliefs, peg, config.alpha)
    target = beliefs[chosen]
    hole = world.holes[chosen]

    if variant is PolicyVariant.SAMPLED_INITIAL:
        start = target.position.sample(rng)
    else:
        start = target.position.mean

    outcome = rollout_low_level(
        start, peg, hole, models.spiral, config.horizon_low, rng,
        capture_radius=config.capture_radius,
        alignment_rate=config.alignment_rate,
        workspace=(config.workspace_min, config.workspace_max),
    )
    beta = outcome.success

    position = target.position
    type_belief = target.type_belief
    evidence_reset = False

    if variant.updates_position:
        if beta:
            if variant is PolicyVariant.FRAME_BY_FRAME:
                position = GaussianBelief2(outcome.final_ee[:2], position.cov)
            else:
                innovation = Innovation(outcome.final_ee[:2] - position.mean)
                position = kalman_update(position, innovation, INSERTION_NOISE)
        else:
            innovation = sense_position(
                outcome.trace, hole.position, position.mean, models.sensor, rng
            )
            if variant is PolicyVariant.FRAME_BY_FRAME:
                position = GaussianBelief2(
                    position.mean + innovation.value, position.cov
                )
            else:
                position = kalman_update(position, innovation, models.filters.position)

    if variant.updates_types:
        if variant is PolicyVariant.FULL_APPROACH:
            o_match = sense_match(hole.hole_type, peg, models.sensor, rng)
            type_belief, evidence_reset = _updated_type(
                type_belief, o_match, beta, peg, config.alpha, models.filters.match
            )
        else:
            # Outcome evidence only: a uniform confusion factor cancels in the
            # normalizer, leaving the transition term.
            type_belief, evidence_reset = _updated_type(
                type_belief, False, beta, peg, config.alpha, UNINFORMATIVE_MATCH_MODEL
            )

    updated = HoleBelief(
        position=position, type_belief=type_belief, fitted=target.fitted or beta
    )
    new_beliefs = [updated if i == chosen else b for i, b in enumerate(beliefs)]
    record = StepRecord(
        t=0,  # episode loop stamps the step number
        chosen=chosen,
        start_estimate=np.asarray(start, dtype=float),
        beta=beta,
        belief=updated,
        pos_error=float(np.linalg.norm(position.mean - hole.position)),
        evidence_reset=evidence_reset,
    )
    return new_beliefs, record


def run_episode(
    world: World,
    peg: PegType,
    variant: PolicyVariant,
    models: PolicyModels,
    horizon: int,
    rng: np.random.Generator,
    beliefs: list[HoleBelief] | None = None,
) -> EpisodeLog:
    """Attempt loop for one peg: steps until a fit or the horizon."""
    if horizon < 1:
        raise InvalidInputError("episode horizon must be >= 1")
    if beliefs is None:
        beliefs = init_beliefs(world, rng)
    initial = list(beliefs)
    records: list[StepRecord] = []
    for t in range(1, horizon + 1):
        beliefs, record = high_level_step(beliefs, peg, world, variant, models, rng)
        records.append(replace(record, t=t))
        if record.beta:
            break
    status = (
        TerminalStatus.SUCCESS if records and records[-1].beta else TerminalStatus.STEP_CAP
    )
    return EpisodeLog(
        peg=peg,
        records=records,
        status=status,
        initial_beliefs=initial,
        final_beliefs=beliefs,
    )


def run_assembly_task(
    world: World,
    pegs: list[PegType],
    variant: PolicyVariant,
    models: PolicyModels,
    rng: np.random.Generator,
    step_cap: int = 30,
) -> AssemblyResult:
    """Sequential per-peg episodes with persistent beliefs.

    A peg that exhausts the step cap triggers an intervention: the
    lowest-index unfitted hole of the peg's true type is marked fitted and
    the task moves on.
    """
    world_types = sorted(h.hole_type for h in world.holes)
    if sorted(p.value for p in pegs) != world_types:
        raise InvalidInputError("pegs must be a permutation of the world's hole types")

    beliefs = init_beliefs(world, rng)
    episodes: list[EpisodeLog] = []
    attempts: list[int] = []
    interventions = 0
    for peg in pegs:
        episode = run_episode(
            world, peg, variant, models, step_cap, rng, beliefs=beliefs
        )
        beliefs = episode.final_beliefs
        if episode.status is TerminalStatus.STEP_CAP:
            episode.status = TerminalStatus.INTERVENTION
            interventions += 1
            beliefs = _intervene(beliefs, world, peg)
            episode.final_beliefs = beliefs
        episodes.append(episode)
        attempts.append(episode.attempts)
    return AssemblyResult(
        peg_order=list(pegs),
        attempts_per_peg=attempts,
        interventions=interventions,
        episodes=episodes,
    )


def _intervene(
    beliefs: list[HoleBelief], world: World, peg: PegType
) -> list[HoleBelief]:
    for i, (belief, hole) in enumerate(zip(beliefs, world.holes)):
        if not belief.fitted and hole.hole_type == peg.value:
            fixed = HoleBelief(
                position=belief.position, type_belief=belief.type_belief, fitted=True
            )
            return [fixed if k == i else b for k, b in enumerate(beliefs)]
    raise NoActionError("intervention found no matching unfitted hole")
