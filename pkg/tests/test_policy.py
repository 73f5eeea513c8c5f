import dataclasses

import numpy as np
import pytest

from belieffit import (
    EnvConfig,
    FilterModels,
    HoleBelief,
    HoleGroundTruth,
    MatchObservationModel,
    MatchSensorSpec,
    PegType,
    PolicyModels,
    PolicyVariant,
    PositionNoiseModel,
    SensorModel,
    SpiralParams,
    TerminalStatus,
    TypeBelief,
    World,
    high_level_step,
    init_beliefs,
    init_position_belief,
    run_assembly_task,
    run_episode,
    select_hole,
    spawn_world,
)
from belieffit.errors import InvalidInputError, NoActionError
from belieffit.seeding import derive_rng

CFG = EnvConfig()


def default_models(cfg=CFG):
    return PolicyModels(
        spiral=SpiralParams(),
        sensor=SensorModel(),
        filters=FilterModels(
            position=PositionNoiseModel(6.4e-5 * np.eye(2)),
            match=MatchObservationModel(0.85, 0.15),
        ),
    )


def belief_with_masses(masses, fitted=False, mean=(0.0, 0.0)):
    return HoleBelief(
        position=init_position_belief(mean, 1e-4),
        type_belief=TypeBelief(np.asarray(masses) / np.sum(masses)),
        fitted=fitted,
    )


def single_hole_world(hole_type=1, position=(0.0, 0.0), **cfg_overrides):
    cfg = dataclasses.replace(CFG, n_holes=1, **cfg_overrides)
    return World(holes=(HoleGroundTruth(hole_type, position),), config=cfg)


class TestSelectHole:
    def test_strict_argmax(self):
        beliefs = [
            belief_with_masses([0.2, 0.5, 0.3]),
            belief_with_masses([0.7, 0.2, 0.1]),
            belief_with_masses([0.1, 0.5, 0.4]),
        ]
        assert select_hole(beliefs, PegType(1), 0.34) == 1

    def test_tie_break_lowest_index(self):
        beliefs = [
            belief_with_masses([0.5, 0.4, 0.1]),
            belief_with_masses([0.5, 0.4, 0.1]),
            belief_with_masses([0.1, 0.5, 0.4]),
        ]
        assert select_hole(beliefs, PegType(1), 0.34) == 0

    def test_fitted_hole_excluded(self):
        beliefs = [
            belief_with_masses([0.2, 0.6, 0.2]),
            belief_with_masses([0.9, 0.05, 0.05], fitted=True),
            belief_with_masses([0.3, 0.4, 0.3]),
        ]
        assert select_hole(beliefs, PegType(1), 0.34) == 2

    def test_alpha_scaling_does_not_change_choice(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            masses = rng.uniform(0.05, 1.0, (4, 3))
            beliefs = [belief_with_masses(m) for m in masses]
            picks = {select_hole(beliefs, PegType(2), a) for a in (0.05, 0.34, 1.0)}
            assert len(picks) == 1

    def test_all_fitted_raises(self):
        beliefs = [belief_with_masses([1, 1, 1], fitted=True)]
        with pytest.raises(NoActionError):
            select_hole(beliefs, PegType(1), 0.34)


class TestHighLevelStep:
    def test_locality_of_updates(self):
        world = spawn_world(CFG, derive_rng(0, 1))
        beliefs = init_beliefs(world, derive_rng(0, 2))
        new_beliefs, rec = high_level_step(
            beliefs, PegType(1), world, PolicyVariant.FULL_APPROACH,
            default_models(), derive_rng(0, 3),
        )
        for i, (old, new) in enumerate(zip(beliefs, new_beliefs)):
            if i == rec.chosen:
                assert new is not old
            else:
                assert new is old

    def test_full_approach_updates_position_and_types_on_failure(self):
        # mismatched peg on a single hole: the rollout always fails
        world = single_hole_world(hole_type=2)
        beliefs = [belief_with_masses([1, 1, 1], mean=(0.01, 0.01))]
        new_beliefs, rec = high_level_step(
            beliefs, PegType(1), world, PolicyVariant.FULL_APPROACH,
            default_models(), derive_rng(1, 3),
        )
        assert not rec.beta
        assert not np.array_equal(
            new_beliefs[0].position.mean, beliefs[0].position.mean
        )
        assert not np.array_equal(
            new_beliefs[0].type_belief.probs, beliefs[0].type_belief.probs
        )

    def test_failure_only_transition_posterior(self):
        world = single_hole_world(hole_type=2)
        beliefs = [belief_with_masses([1, 1, 1], mean=(0.01, 0.01))]
        new_beliefs, rec = high_level_step(
            beliefs, PegType(1), world, PolicyVariant.FAILURE_ONLY,
            default_models(), derive_rng(2, 3),
        )
        assert not rec.beta
        assert np.allclose(
            new_beliefs[0].type_belief.probs, [0.2481, 0.3759, 0.3759], atol=1e-4
        )
        # position belief untouched
        assert np.array_equal(new_beliefs[0].position.mean, beliefs[0].position.mean)

    def test_fixed_and_sampled_leave_beliefs_untouched_on_failure(self):
        world = single_hole_world(hole_type=2)
        for variant in (PolicyVariant.FIXED_INITIAL, PolicyVariant.SAMPLED_INITIAL):
            beliefs = [belief_with_masses([1, 1, 1], mean=(0.01, 0.01))]
            new_beliefs, rec = high_level_step(
                beliefs, PegType(1), world, variant, default_models(), derive_rng(3, 3)
            )
            assert np.array_equal(
                new_beliefs[0].position.mean, beliefs[0].position.mean
            )
            assert np.array_equal(
                new_beliefs[0].type_belief.probs, beliefs[0].type_belief.probs
            )

    def test_frame_by_frame_replaces_mean_keeps_cov(self):
        world = single_hole_world(hole_type=2)
        beliefs = [belief_with_masses([1, 1, 1], mean=(0.01, 0.01))]
        new_beliefs, _ = high_level_step(
            beliefs, PegType(1), world, PolicyVariant.FRAME_BY_FRAME,
            default_models(), derive_rng(4, 3),
        )
        assert not np.array_equal(
            new_beliefs[0].position.mean, beliefs[0].position.mean
        )
        assert np.array_equal(new_beliefs[0].position.cov, beliefs[0].position.cov)

    def test_success_sets_fitted_and_pays_reward(self):
        world = single_hole_world(hole_type=1, alignment_rate=1.0)
        beliefs = [belief_with_masses([1, 1, 1], mean=(0.0, 0.0))]
        models = dataclasses.replace(
            default_models(), spiral=SpiralParams(sigma_wiggle=0.0)
        )
        new_beliefs, rec = high_level_step(
            beliefs, PegType(1), world, PolicyVariant.FULL_APPROACH, models,
            derive_rng(5, 3),
        )
        assert rec.beta and rec.reward == 1.0
        assert new_beliefs[0].fitted
        assert new_beliefs[0].type_belief.prob_of(1) == pytest.approx(1.0, abs=1e-9)
        # insertion pins the position estimate to the final tip position
        assert rec.pos_error <= CFG.capture_radius + 1e-9


class TestRunEpisode:
    def test_immediate_success_with_perfect_knowledge(self):
        world = single_hole_world(hole_type=1, alignment_rate=1.0)
        beliefs = [belief_with_masses([1, 0, 0], mean=(0.0, 0.0))]
        models = dataclasses.replace(
            default_models(), spiral=SpiralParams(sigma_wiggle=0.0)
        )
        log = run_episode(
            world, PegType(1), PolicyVariant.FULL_APPROACH, models, 10,
            derive_rng(6, 3), beliefs=beliefs,
        )
        assert log.status is TerminalStatus.SUCCESS
        assert log.attempts == 1

    def test_impossible_task_hits_step_cap(self):
        world = single_hole_world(hole_type=2)
        beliefs = [belief_with_masses([1, 1, 1])]
        log = run_episode(
            world, PegType(1), PolicyVariant.FULL_APPROACH, default_models(), 7,
            derive_rng(7, 3), beliefs=beliefs,
        )
        assert log.status is TerminalStatus.STEP_CAP
        assert log.attempts == 7

    def test_determinism(self):
        world = single_hole_world(hole_type=1)
        logs = []
        for _ in range(2):
            beliefs = [belief_with_masses([1, 1, 1], mean=(0.012, -0.005))]
            logs.append(
                run_episode(
                    world, PegType(1), PolicyVariant.FULL_APPROACH, default_models(),
                    10, derive_rng(8, 3), beliefs=beliefs,
                )
            )
        a, b = logs
        assert a.status == b.status and a.attempts == b.attempts
        for ra, rb in zip(a.records, b.records):
            assert ra.chosen == rb.chosen and ra.beta == rb.beta
            assert np.array_equal(ra.belief.position.mean, rb.belief.position.mean)

    def test_full_approach_covariance_contracts_each_step(self):
        world = single_hole_world(hole_type=2)  # mismatch: never terminates early
        beliefs = [belief_with_masses([1, 1, 1], mean=(0.01, 0.0))]
        log = run_episode(
            world, PegType(1), PolicyVariant.FULL_APPROACH, default_models(), 6,
            derive_rng(9, 3), beliefs=beliefs,
        )
        traces = [np.trace(beliefs[0].position.cov)] + [
            np.trace(r.belief.position.cov) for r in log.records
        ]
        assert all(b <= a + 1e-15 for a, b in zip(traces, traces[1:]))

    def test_geometric_attempts_with_perfect_knowledge(self):
        world = single_hole_world(hole_type=1)
        models = default_models()
        attempts = []
        for trial in range(300):
            beliefs = [belief_with_masses([1, 0, 0], mean=(0.0, 0.0))]
            log = run_episode(
                world, PegType(1), PolicyVariant.FIXED_INITIAL, models, 200,
                derive_rng(10, 3, trial), beliefs=beliefs,
            )
            assert log.status is TerminalStatus.SUCCESS
            attempts.append(log.attempts)
        mean = np.mean(attempts)
        # success per attempt is the alignment rate at zero start error
        assert mean == pytest.approx(1.0 / CFG.alignment_rate, rel=0.15)


class TestAssembly:
    def _world_and_models(self, seed=0, **cfg_overrides):
        cfg = dataclasses.replace(CFG, **cfg_overrides)
        world = spawn_world(cfg, derive_rng(seed, 1))
        return world, default_models(cfg)

    def test_peg_permutation_validated(self):
        world, models = self._world_and_models()
        with pytest.raises(InvalidInputError):
            run_assembly_task(
                world, [PegType(1)] * 5, PolicyVariant.FULL_APPROACH, models,
                derive_rng(0, 3),
            )

    def test_accounting_invariants(self):
        world, models = self._world_and_models(seed=3)
        pegs = [PegType(h.hole_type) for h in world.holes]
        result = run_assembly_task(
            world, pegs, PolicyVariant.FAILURE_ONLY, models, derive_rng(3, 3),
            step_cap=12,
        )
        assert result.cumulative_attempts[-1] == sum(result.attempts_per_peg)
        assert 0 <= result.interventions <= len(pegs)
        assert len(result.episodes) == len(pegs)
        # every hole ends fitted, by success or intervention
        assert all(b.fitted for b in result.episodes[-1].final_beliefs)

    def test_informed_agent_with_no_cap_never_intervenes(self):
        world, models = self._world_and_models(
            seed=4, detector_error_bound=0.0, alignment_rate=1.0
        )
        models = dataclasses.replace(
            models,
            sensor=SensorModel(match=MatchSensorSpec(tpr=1 - 1e-9, fpr=1e-9)),
            spiral=SpiralParams(sigma_wiggle=0.0),
        )
        pegs = [PegType(h.hole_type) for h in world.holes]
        result = run_assembly_task(
            world, pegs, PolicyVariant.FULL_APPROACH, models, derive_rng(4, 3),
            step_cap=10_000,
        )
        assert result.interventions == 0

    def test_fitted_holes_never_reselected(self):
        world, models = self._world_and_models(seed=5)
        pegs = [PegType(h.hole_type) for h in world.holes]
        result = run_assembly_task(
            world, pegs, PolicyVariant.FULL_APPROACH, models, derive_rng(5, 3)
        )
        fitted: set[int] = set()
        for episode in result.episodes:
            for rec in episode.records:
                assert rec.chosen not in fitted
            for i, belief in enumerate(episode.final_beliefs):
                if belief.fitted:
                    fitted.add(i)
