"""Acceptance suite: one test per shipped behavioral criterion.

Each test prints a PASS line with the measured numbers so the suite doubles
as a verification report (run with `pytest -s tests/test_acceptance.py`).
"""

import dataclasses
import time

import numpy as np

from belieffit import (
    EnvConfig,
    FilterModels,
    GaussianBelief2,
    HoleBelief,
    Innovation,
    InteractionRecord,
    LearnedParams,
    MatchObservationModel,
    PegType,
    PolicyModels,
    PolicyVariant,
    PositionNoiseModel,
    SensorModel,
    SpiralParams,
    TerminalStatus,
    TypeBelief,
    World,
    batch_nll,
    fit_parameters,
    grad_nll,
    histogram_update,
    init_position_belief,
    kalman_update,
    run_assembly_task,
    run_episode,
    spawn_world,
    tune_capture_radius,
)
from belieffit.cli import main as cli_main
from belieffit.experiments import ExperimentSpec, run_experiment
from belieffit.seeding import derive_rng
from belieffit.beliefs import HoleGroundTruth

CFG = EnvConfig()
SPIRAL = SpiralParams()
SENSORS = SensorModel()
LEARNED = FilterModels(
    position=PositionNoiseModel(SENSORS.position.cov),
    match=MatchObservationModel(SENSORS.match.tpr, SENSORS.match.fpr),
)
MODELS = PolicyModels(spiral=SPIRAL, sensor=SENSORS, filters=LEARNED)


def spec_for(kind, trials, seed=2024, **kwargs):
    return ExperimentSpec(
        kind=kind, env=CFG, spiral=SPIRAL, sensors=SENSORS, learned=LEARNED,
        trials=trials, seed=seed, **kwargs,
    )


def report(num, text):
    print(f"\n[criterion {num}] PASS: {text}")


class Elapsed:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0
        return False


def brute_force_type_posterior(prior, o_match, beta, peg, alpha, tpr, fpr):
    post = []
    for k in range(len(prior)):
        match = (k + 1) == peg
        h = (tpr if match else fpr) if o_match else ((1 - tpr) if match else (1 - fpr))
        p_succ = alpha if match else 0.0
        t = p_succ if beta else 1.0 - p_succ
        post.append(h * t * prior[k])
    eta = sum(post)
    return np.array([x / eta for x in post])


def test_criterion_1_filter_algebra():
    rng = np.random.default_rng(10)
    with Elapsed() as el:
        worst_hist = 0.0
        for _ in range(1000):
            n_types = int(rng.integers(2, 6))
            prior = rng.uniform(0.01, 1.0, n_types)
            prior = prior / prior.sum()
            peg = int(rng.integers(1, n_types + 1))
            alpha = float(rng.uniform(0.05, 0.95))
            tpr = float(rng.uniform(0.5, 0.99))
            fpr = float(rng.uniform(0.01, 0.5))
            o_match = bool(rng.integers(0, 2))
            beta = bool(rng.integers(0, 2))
            post = histogram_update(
                TypeBelief(prior), o_match, beta, PegType(peg), alpha,
                MatchObservationModel(tpr, fpr),
            )
            oracle = brute_force_type_posterior(
                prior, o_match, beta, peg, alpha, tpr, fpr
            )
            worst_hist = max(worst_hist, float(np.max(np.abs(post.probs - oracle))))
        assert worst_hist <= 1e-12

        worst_kalman = 0.0
        for _ in range(1000):
            a = rng.normal(0.0, 0.01, (2, 2))
            sigma = a @ a.T
            b = rng.normal(0.0, 0.01, (2, 2))
            noise = b @ b.T + 1e-12 * np.eye(2)
            mean = rng.normal(0.0, 0.1, 2)
            h = rng.normal(0.0, 0.01, 2)
            post = kalman_update(
                GaussianBelief2(mean, sigma), Innovation(h), PositionNoiseModel(noise)
            )
            gain = sigma @ np.linalg.inv(noise + sigma)
            worst_kalman = max(
                worst_kalman,
                float(np.max(np.abs(post.mean - (mean + gain @ h)))),
                float(np.max(np.abs(post.cov - (np.eye(2) - gain) @ sigma))),
            )
        assert worst_kalman <= 1e-9
    assert el.seconds < 5.0
    report(1, f"histogram max dev {worst_hist:.2e} (<=1e-12), "
              f"kalman max dev {worst_kalman:.2e} (<=1e-9), {el.seconds:.1f}s")


def test_criterion_2_covariance_contraction_law():
    with Elapsed() as el:
        sigma0 = 1e-4
        r = 6.4e-5
        belief = GaussianBelief2(np.zeros(2), sigma0 * np.eye(2))
        noise = PositionNoiseModel(r * np.eye(2))
        rng = np.random.default_rng(1)
        worst = 0.0
        for t in range(1, 21):
            belief = kalman_update(belief, Innovation(rng.normal(0, 0.01, 2)), noise)
            expected = sigma0 * r / (r + t * sigma0)
            worst = max(
                worst,
                abs(belief.cov[0, 0] - expected),
                abs(belief.cov[1, 1] - expected),
                abs(belief.cov[0, 1]),
            )
        assert worst <= 1e-9
    assert el.seconds < 1.0
    report(2, f"repeated-update law max dev {worst:.2e} (<=1e-9), {el.seconds:.2f}s")


def test_criterion_3_alpha_calibration():
    with Elapsed() as el:
        result = tune_capture_radius(
            CFG, SPIRAL, target_alpha=CFG.alpha, trials=1000, rng=derive_rng(99, 4)
        )
        assert result.feasible
        assert 0.29 <= result.alpha_hat <= 0.39
    assert el.seconds < 30.0
    report(3, f"tuned capture radius {result.capture_radius*1000:.1f} mm, "
              f"alpha_hat {result.alpha_hat:.3f} in [0.29, 0.39], {el.seconds:.1f}s")


def test_criterion_4_geometric_attempts():
    with Elapsed() as el:
        hole = HoleGroundTruth(hole_type=1, position=(0.0, 0.0))
        world = World(holes=(hole,), config=dataclasses.replace(CFG, n_holes=1))
        attempts = []
        for trial in range(1000):
            beliefs = [
                HoleBelief(
                    position=init_position_belief((0.0, 0.0), CFG.sigma_init),
                    type_belief=TypeBelief(np.array([1.0, 0.0, 0.0])),
                )
            ]
            log = run_episode(
                world, PegType(1), PolicyVariant.FIXED_INITIAL, MODELS, 300,
                derive_rng(2024, 40, trial), beliefs=beliefs,
            )
            assert log.status is TerminalStatus.SUCCESS
            attempts.append(log.attempts)
        mean = float(np.mean(attempts))
        target = 1.0 / CFG.alpha
        assert abs(mean - target) <= 0.1 * target
    assert el.seconds < 30.0
    report(4, f"mean attempts {mean:.3f} vs 1/alpha {target:.3f} (+/-10%), "
              f"{el.seconds:.1f}s")


def test_criterion_5_position_estimation_analog():
    with Elapsed() as el:
        metric_rows, _ = run_experiment(spec_for("position_estimation", 100, steps=5))

        def series(variant, metric):
            return [
                r.value for r in metric_rows
                if r.variant == variant.value and r.metric == metric
            ]

        fa_mean = series(PolicyVariant.FULL_APPROACH, "pos_error_mean")
        fa_std = series(PolicyVariant.FULL_APPROACH, "pos_error_std")
        fbf_std = series(PolicyVariant.FRAME_BY_FRAME, "pos_error_std")
        assert fa_mean[5] <= 0.65 * fa_mean[0]
        for t in range(2, 6):
            assert fbf_std[t] > fa_std[t]
    assert el.seconds < 120.0
    report(5, f"full-approach error {fa_mean[0]*100:.2f} -> {fa_mean[5]*100:.2f} cm "
              f"(ratio {fa_mean[5]/fa_mean[0]:.2f} <= 0.65); frame-by-frame std "
              f"dominates at t>=2, {el.seconds:.1f}s")


def test_criterion_6_matching_insertion_analog():
    with Elapsed() as el:
        metric_rows, _ = run_experiment(spec_for("matching_insertion", 150))
        final = {}
        for variant in (
            PolicyVariant.FULL_APPROACH,
            PolicyVariant.FRAME_BY_FRAME,
            PolicyVariant.SAMPLED_INITIAL,
            PolicyVariant.FIXED_INITIAL,
        ):
            final[variant] = next(
                r.value for r in metric_rows
                if r.variant == variant.value
                and r.metric == "success_rate"
                and r.step == CFG.horizon_high
            )
        fa = final[PolicyVariant.FULL_APPROACH]
        fbf = final[PolicyVariant.FRAME_BY_FRAME]
        sampled = final[PolicyVariant.SAMPLED_INITIAL]
        fixed = final[PolicyVariant.FIXED_INITIAL]
        assert fa >= fbf >= sampled >= fixed
        assert fa >= 0.95
        assert sampled <= 0.90
    assert el.seconds < 300.0
    report(6, f"success within 10: full {fa:.3f} >= frame {fbf:.3f} >= "
              f"sampled {sampled:.3f} >= fixed {fixed:.3f}; "
              f"full >= 0.95, sampled <= 0.90, {el.seconds:.1f}s")


def test_criterion_7_assembly_analog():
    with Elapsed() as el:
        trials = 100
        totals = {v: [] for v in (
            PolicyVariant.FULL_APPROACH,
            PolicyVariant.FAILURE_PLUS_POSITION,
            PolicyVariant.FAILURE_ONLY,
        )}
        interventions = {v: 0 for v in totals}
        for trial in range(trials):
            world = spawn_world(CFG, derive_rng(2024, 70, trial), SPIRAL)
            types = [h.hole_type for h in world.holes]
            order = derive_rng(2024, 71, trial).permutation(len(types))
            pegs = [PegType(types[i]) for i in order]
            for vi, variant in enumerate(totals):
                result = run_assembly_task(
                    world, pegs, variant, MODELS,
                    derive_rng(2024, 72, trial, vi), step_cap=30,
                )
                totals[variant].append(result.cumulative_attempts[-1])
                interventions[variant] += result.interventions

        n_tasks = trials * CFG.n_holes
        fa_rate = interventions[PolicyVariant.FULL_APPROACH] / n_tasks
        fo_rate = interventions[PolicyVariant.FAILURE_ONLY] / n_tasks
        assert fo_rate >= 5.0 * fa_rate

        def mean_gap_z(slow, fast):
            diff = np.asarray(totals[slow], dtype=float) - np.asarray(
                totals[fast], dtype=float
            )
            return diff.mean() / (diff.std(ddof=1) / np.sqrt(trials))

        fa = float(np.mean(totals[PolicyVariant.FULL_APPROACH]))
        fpp = float(np.mean(totals[PolicyVariant.FAILURE_PLUS_POSITION]))
        fo = float(np.mean(totals[PolicyVariant.FAILURE_ONLY]))
        z1 = mean_gap_z(PolicyVariant.FAILURE_PLUS_POSITION, PolicyVariant.FULL_APPROACH)
        z2 = mean_gap_z(PolicyVariant.FAILURE_ONLY, PolicyVariant.FAILURE_PLUS_POSITION)
        assert fa < fpp < fo
        assert z1 > 2.0 and z2 > 2.0
    assert el.seconds < 600.0
    report(7, f"interventions: failure-only {fo_rate:.3f} >= 5x full {fa_rate:.3f}; "
              f"cumulative attempts {fa:.1f} < {fpp:.1f} < {fo:.1f} "
              f"(z={z1:.1f}, {z2:.1f} > 2), {el.seconds:.1f}s")


def test_criterion_8_training_consistency():
    with Elapsed() as el:
        rng = derive_rng(2024, 80)
        r_true = SENSORS.position.cov
        chol = np.linalg.cholesky(r_true)
        tpr_true, fpr_true = SENSORS.match.tpr, SENSORS.match.fpr
        n = 10_000
        records = []
        for i in range(n):
            matched = i % 2 == 0
            hole_type = int(rng.integers(1, CFG.n_types + 1))
            if matched:
                peg_type = hole_type
            else:
                others = [t for t in range(1, CFG.n_types + 1) if t != hole_type]
                peg_type = int(others[rng.integers(0, len(others))])
            p = rng.uniform(-0.1, 0.1, 2)
            mu0 = p - np.sqrt(CFG.sigma_init) * rng.standard_normal(2)
            obs = p + chol @ rng.standard_normal(2)
            o_match = bool(rng.random() < (tpr_true if matched else fpr_true))
            # outcome drawn from the task dynamics so the joint follows the model
            beta = bool(matched and rng.random() < CFG.alpha)
            # the record prior must mirror how classes were drawn: half the
            # mass on the peg's class, the rest uniform over the others
            xi0 = np.full(CFG.n_types, 0.5 / (CFG.n_types - 1))
            xi0[peg_type - 1] = 0.5
            records.append(
                InteractionRecord(
                    peg_type=peg_type, hole_type=hole_type, position=p, mu0=mu0,
                    sigma0=CFG.sigma_init * np.eye(2), xi0=xi0,
                    obs=obs, o_match=o_match, beta=beta,
                )
            )
        params = fit_parameters(
            records,
            init=LearnedParams.from_values(4e-4 * np.eye(2), 0.6, 0.4),
            lr=0.05, epochs=1500, alpha=CFG.alpha,
        )
        cov_gap = np.linalg.norm(params.position_cov - r_true) / np.linalg.norm(r_true)
        assert cov_gap <= 0.10
        assert abs(params.tpr - tpr_true) <= 0.02
        assert abs(params.fpr - fpr_true) <= 0.02

        check_rng = derive_rng(2024, 81)
        fd_records = records[:50]
        worst = 0.0
        for _ in range(100):
            theta = np.concatenate(
                [check_rng.uniform(-6.0, -3.0, 1), check_rng.uniform(-0.01, 0.01, 1),
                 check_rng.uniform(-6.0, -3.0, 1), check_rng.uniform(-2.0, 2.0, 2)]
            )
            candidate = LearnedParams(theta)
            analytic = grad_nll(candidate, fd_records, CFG.alpha)
            numeric = np.zeros(5)
            for k in range(5):
                up, dn = theta.copy(), theta.copy()
                up[k] += 1e-6
                dn[k] -= 1e-6
                numeric[k] = (
                    batch_nll(LearnedParams(up), fd_records, CFG.alpha)
                    - batch_nll(LearnedParams(dn), fd_records, CFG.alpha)
                ) / 2e-6
            rel = np.abs(analytic - numeric) / (1.0 + np.abs(numeric))
            worst = max(worst, float(np.max(rel)))
        assert worst <= 1e-4
    assert el.seconds < 120.0
    report(8, f"learned cov gap {cov_gap:.3f} (<=0.10), "
              f"(tpr, fpr) = ({params.tpr:.3f}, {params.fpr:.3f}) vs "
              f"({tpr_true}, {fpr_true}) +/-0.02; grad-vs-FD worst {worst:.2e} "
              f"(<=1e-4), {el.seconds:.1f}s")


def test_criterion_9_byte_identical_outputs(tmp_path):
    with Elapsed() as el:
        args = [
            "experiment", "matching_insertion", "--trials", "6", "--seed", "31",
        ]
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert cli_main(args + ["--out", str(out)]) == 0
            outs.append(out)
        m1 = (outs[0] / "metrics.csv").read_bytes()
        m2 = (outs[1] / "metrics.csv").read_bytes()
        s1 = (outs[0] / "steps.csv").read_bytes()
        s2 = (outs[1] / "steps.csv").read_bytes()
        assert m1 == m2 and s1 == s2

        cal = []
        for name in ("c1.json", "c2.json"):
            path = tmp_path / name
            assert cli_main(
                ["calibrate", "--trials", "40", "--seed", "7", "--out", str(path)]
            ) == 0
            cal.append(path.read_bytes())
        assert cal[0] == cal[1]
    report(9, f"experiment and calibrate outputs byte-identical across reruns, "
              f"{el.seconds:.1f}s")
