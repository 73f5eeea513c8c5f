"""Monte-Carlo experiment harness for the three benchmark studies.

Worlds, detections and peg orders are derived from (master seed, trial) only,
so every variant faces the identical sequence of environments; episode noise
additionally keys on the variant.  Trial results are collected into fixed
slots, which makes outputs byte-identical for any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .beliefs import EnvConfig, PegType
from .errors import ConfigurationError, InvalidInputError
from .filters import FilterModels
from .policy import (
    AssemblyResult,
    EpisodeLog,
    PolicyModels,
    PolicyVariant,
    TerminalStatus,
    init_beliefs,
    run_assembly_task,
    run_episode,
)
from .seeding import (
    STREAM_DETECT,
    STREAM_EPISODE,
    STREAM_PEGS,
    STREAM_WORLD,
    derive_rng,
)
from .sensors import SensorModel
from .sim import SpiralParams, World, spawn_world

KIND_POSITION = "position_estimation"
KIND_MATCHING = "matching_insertion"
KIND_ASSEMBLY = "assembly"

KIND_IDS = {KIND_POSITION: 1, KIND_MATCHING: 2, KIND_ASSEMBLY: 3}

DEFAULT_VARIANTS = {
    KIND_POSITION: (PolicyVariant.FULL_APPROACH, PolicyVariant.FRAME_BY_FRAME),
    KIND_MATCHING: (
        PolicyVariant.FULL_APPROACH,
        PolicyVariant.FRAME_BY_FRAME,
        PolicyVariant.SAMPLED_INITIAL,
        PolicyVariant.FIXED_INITIAL,
    ),
    KIND_ASSEMBLY: (
        PolicyVariant.FULL_APPROACH,
        PolicyVariant.FAILURE_PLUS_POSITION,
        PolicyVariant.FAILURE_ONLY,
    ),
}

ATTEMPT_HIST_BIN = 6

METRIC_COLUMNS = ("experiment", "variant", "trial", "step", "metric", "value", "seed")
STEP_COLUMNS = (
    "experiment", "variant", "trial", "peg_index", "peg_type", "step",
    "chosen_hole", "start_x", "start_y", "beta", "mu_x", "mu_y",
    "cov_xx", "cov_xy", "cov_yy", "xi", "fitted", "pos_error", "status", "seed",
)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    variant: str
    trial: int
    step: int
    metric: str
    value: float
    seed: int

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise InvalidInputError("metric values must be finite")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    env: EnvConfig
    spiral: SpiralParams
    sensors: SensorModel
    learned: FilterModels
    trials: int = 100
    seed: int = 0
    variants: tuple[PolicyVariant, ...] = ()
    steps: int = 5
    step_cap: int = 30
    seed_groups: int = 5
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KIND_IDS:
            raise ConfigurationError(f"unknown experiment kind: {self.kind}")
        if self.trials < 1:
            raise ConfigurationError("need at least one trial")
        if not self.variants:
            object.__setattr__(self, "variants", DEFAULT_VARIANTS[self.kind])

    @property
    def models(self) -> PolicyModels:
        return PolicyModels(
            spiral=self.spiral, sensor=self.sensors, filters=self.learned
        )


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("BELIEFFIT_THREADS", "")
    try:
        return max(1, int(raw)) if raw else max(1, default)
    except ValueError:
        return max(1, default)


def _map_trials(worker, n_trials: int, threads: int) -> list:
    if threads <= 1:
        return [worker(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n_trials)))


def _variant_key(variant: PolicyVariant) -> int:
    return list(PolicyVariant).index(variant)


def _episode_step_rows(
    spec: ExperimentSpec,
    variant: PolicyVariant,
    trial: int,
    episode: EpisodeLog,
    peg_index: int = 0,
) -> list[dict]:
    rows = []
    for rec in episode.records:
        pos = rec.belief.position
        rows.append(
            {
                "experiment": spec.kind,
                "variant": variant.value,
                "trial": trial,
                "peg_index": peg_index,
                "peg_type": episode.peg.value,
                "step": rec.t,
                "chosen_hole": rec.chosen,
                "start_x": float(rec.start_estimate[0]),
                "start_y": float(rec.start_estimate[1]),
                "beta": int(rec.beta),
                "mu_x": float(pos.mean[0]),
                "mu_y": float(pos.mean[1]),
                "cov_xx": float(pos.cov[0, 0]),
                "cov_xy": float(pos.cov[0, 1]),
                "cov_yy": float(pos.cov[1, 1]),
                "xi": "|".join(repr(float(x)) for x in rec.belief.type_belief.probs),
                "fitted": int(rec.belief.fitted),
                "pos_error": rec.pos_error,
                "status": episode.status.value,
                "seed": spec.seed,
            }
        )
    return rows


def _single_hole_setup(
    spec: ExperimentSpec, trial: int, matched: bool
) -> tuple[World, PegType, list]:
    kind_id = KIND_IDS[spec.kind]
    env1 = replace(spec.env, n_holes=1)
    world = spawn_world(
        env1, derive_rng(spec.seed, kind_id, STREAM_WORLD, trial), spec.spiral
    )
    hole_type = world.holes[0].hole_type
    if matched:
        peg = PegType(hole_type)
    else:
        peg = PegType(hole_type % env1.n_types + 1)
    beliefs = init_beliefs(world, derive_rng(spec.seed, kind_id, STREAM_DETECT, trial))
    return world, peg, beliefs


def run_position_estimation(spec: ExperimentSpec):
    """Estimation error over repeated interactions with a mismatched peg.

    The mismatch keeps insertion impossible, so every trial provides the full
    sequence of estimate errors; only the position-update rule differs
    between variants.
    """
    kind_id = KIND_IDS[spec.kind]
    metric_rows: list[ResultRow] = []
    step_rows: list[dict] = []
    for variant in spec.variants:
        def worker(trial, variant=variant):
            world, peg, beliefs = _single_hole_setup(spec, trial, matched=False)
            rng = derive_rng(
                spec.seed, kind_id, STREAM_EPISODE, trial, _variant_key(variant)
            )
            initial_error = float(
                np.linalg.norm(beliefs[0].position.mean - world.holes[0].position)
            )
            episode = run_episode(
                world, peg, variant, spec.models, spec.steps, rng, beliefs=beliefs
            )
            errors = [initial_error] + [r.pos_error for r in episode.records]
            return errors, _episode_step_rows(spec, variant, trial, episode)

        results = _map_trials(worker, spec.trials, spec.threads)
        errors = np.array([r[0] for r in results])
        for rows in results:
            step_rows.extend(rows[1])
        for t in range(spec.steps + 1):
            metric_rows.append(
                ResultRow(spec.kind, variant.value, -1, t, "pos_error_mean",
                          float(errors[:, t].mean()), spec.seed)
            )
            metric_rows.append(
                ResultRow(spec.kind, variant.value, -1, t, "pos_error_std",
                          float(errors[:, t].std()), spec.seed)
            )
    return metric_rows, step_rows


def run_matching_insertion(spec: ExperimentSpec):
    """Success-within-t curves on a task whose single hole matches the peg."""
    kind_id = KIND_IDS[spec.kind]
    horizon = spec.env.horizon_high
    metric_rows: list[ResultRow] = []
    step_rows: list[dict] = []
    for variant in spec.variants:
        def worker(trial, variant=variant):
            world, peg, beliefs = _single_hole_setup(spec, trial, matched=True)
            group = trial % max(1, spec.seed_groups)
            rng = derive_rng(
                spec.seed, kind_id, STREAM_EPISODE, trial, _variant_key(variant), group
            )
            episode = run_episode(
                world, peg, variant, spec.models, horizon, rng, beliefs=beliefs
            )
            success_step = (
                episode.attempts
                if episode.status is TerminalStatus.SUCCESS
                else None
            )
            return success_step, _episode_step_rows(spec, variant, trial, episode)

        results = _map_trials(worker, spec.trials, spec.threads)
        steps_to_success = [r[0] for r in results]
        for rows in results:
            step_rows.extend(rows[1])
        for t in range(1, horizon + 1):
            rate = sum(1 for s in steps_to_success if s is not None and s <= t)
            metric_rows.append(
                ResultRow(spec.kind, variant.value, -1, t, "success_rate",
                          rate / spec.trials, spec.seed)
            )
    return metric_rows, step_rows


def run_assembly(spec: ExperimentSpec):
    """Multi-peg task: cumulative attempts and intervention rates."""
    kind_id = KIND_IDS[spec.kind]
    metric_rows: list[ResultRow] = []
    step_rows: list[dict] = []
    n_pegs = spec.env.n_holes
    for variant in spec.variants:
        def worker(trial, variant=variant):
            world = spawn_world(
                spec.env, derive_rng(spec.seed, kind_id, STREAM_WORLD, trial),
                spec.spiral,
            )
            peg_rng = derive_rng(spec.seed, kind_id, STREAM_PEGS, trial)
            types = [h.hole_type for h in world.holes]
            pegs = [PegType(types[i]) for i in peg_rng.permutation(len(types))]
            rng = derive_rng(
                spec.seed, kind_id, STREAM_EPISODE, trial, _variant_key(variant)
            )
            result = run_assembly_task(
                world, pegs, variant, spec.models, rng, step_cap=spec.step_cap
            )
            rows = []
            for peg_index, episode in enumerate(result.episodes):
                rows.extend(
                    _episode_step_rows(spec, variant, trial, episode, peg_index)
                )
            return result, rows

        results = _map_trials(worker, spec.trials, spec.threads)
        assemblies: list[AssemblyResult] = [r[0] for r in results]
        for rows in results:
            step_rows.extend(rows[1])

        interventions = sum(a.interventions for a in assemblies)
        metric_rows.append(
            ResultRow(spec.kind, variant.value, -1, 0, "intervention_rate",
                      interventions / (spec.trials * n_pegs), spec.seed)
        )
        cumulative = np.array([a.cumulative_attempts for a in assemblies])
        for n in range(1, n_pegs + 1):
            metric_rows.append(
                ResultRow(spec.kind, variant.value, -1, n, "cum_attempts_mean",
                          float(cumulative[:, n - 1].mean()), spec.seed)
            )
            metric_rows.append(
                ResultRow(spec.kind, variant.value, -1, n, "cum_attempts_std",
                          float(cumulative[:, n - 1].std()), spec.seed)
            )
        totals = cumulative[:, -1]
        n_bins = int(np.ceil(spec.step_cap * n_pegs / ATTEMPT_HIST_BIN))
        for b in range(n_bins):
            lo, hi = b * ATTEMPT_HIST_BIN, (b + 1) * ATTEMPT_HIST_BIN
            count = int(np.sum((totals >= lo) & (totals < hi)))
            metric_rows.append(
                ResultRow(spec.kind, variant.value, -1, b, "attempts_hist",
                          float(count), spec.seed)
            )
    return metric_rows, step_rows


RUNNERS = {
    KIND_POSITION: run_position_estimation,
    KIND_MATCHING: run_matching_insertion,
    KIND_ASSEMBLY: run_assembly,
}


def run_experiment(spec: ExperimentSpec):
    metric_rows, step_rows = RUNNERS[spec.kind](spec)
    metric_rows.sort(key=lambda r: (r.experiment, r.variant, r.trial, r.step, r.metric))
    step_rows.sort(
        key=lambda r: (r["experiment"], r["variant"], r["trial"], r["peg_index"], r["step"])
    )
    return metric_rows, step_rows
