"""Command-line harness: calibrate, train, experiment, replay.

All commands are deterministic given (config, seed, thread count); metric and
step CSVs are written sorted and re-validated before exit.  The environment
variable BELIEFFIT_THREADS caps trial parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from .errors import BeliefFitError, ConfigurationError, OptimizationFailureError
from .experiments import (
    DEFAULT_VARIANTS,
    KIND_IDS,
    METRIC_COLUMNS,
    STEP_COLUMNS,
    ExperimentSpec,
    run_experiment,
    threads_from_env,
)
from .filters import FilterModels, MatchObservationModel, PositionNoiseModel
from .policy import PolicyVariant
from .seeding import STREAM_CALIBRATE, STREAM_DATASET, derive_rng
from .sim import tune_capture_radius
from .training import (
    fit_parameters,
    generate_dataset,
    load_dataset,
    mle_confusion_oracle,
    mle_covariance_oracle,
    save_dataset,
)

DEFAULT_TRIALS = {"position_estimation": 100, "matching_insertion": 150, "assembly": 100}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def validate_metrics_csv(path: Path) -> None:
    """Schema gate run before exit: header, ordering, finite values."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != METRIC_COLUMNS:
            raise ConfigurationError(f"bad metrics header in {path}")
        last_key = None
        for row in reader:
            if len(row) != len(METRIC_COLUMNS):
                raise ConfigurationError(f"ragged row in {path}")
            if not np.isfinite(float(row[5])):
                raise ConfigurationError(f"non-finite metric value in {path}")
            key = (row[0], row[1], int(row[2]), int(row[3]), row[4])
            if last_key is not None and key < last_key:
                raise ConfigurationError(f"rows out of order in {path}")
            last_key = key


def validate_steps_csv(path: Path) -> None:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != STEP_COLUMNS:
            raise ConfigurationError(f"bad steps header in {path}")
        last_key = None
        for row in reader:
            if len(row) != len(STEP_COLUMNS):
                raise ConfigurationError(f"ragged row in {path}")
            key = (row[0], row[1], int(row[2]), int(row[3]), int(row[5]))
            if last_key is not None and key < last_key:
                raise ConfigurationError(f"rows out of order in {path}")
            last_key = key


def _parse_variants(raw: str | None, kind: str) -> tuple[PolicyVariant, ...]:
    if not raw:
        return DEFAULT_VARIANTS[kind]
    by_value = {v.value: v for v in PolicyVariant}
    out = []
    for name in raw.split(","):
        name = name.strip()
        if name not in by_value:
            raise ConfigurationError(
                f"unknown variant {name!r}; choose from {sorted(by_value)}"
            )
        out.append(by_value[name])
    return tuple(out)


def cmd_calibrate(args) -> int:
    doc = cfg.load_config(args.config)
    env = cfg.env_from(doc)
    spiral = cfg.spiral_from(doc)
    seed = args.seed if args.seed is not None else env.rng_seed
    target = args.target_alpha if args.target_alpha is not None else env.alpha
    rng = derive_rng(seed, STREAM_CALIBRATE)
    result = tune_capture_radius(env, spiral, target, args.trials, rng)
    print(f"target alpha      : {result.target}")
    print(f"measured alpha    : {result.alpha_hat}")
    print(f"capture radius [m]: {result.capture_radius}")
    if not result.feasible:
        print(
            "warning: target exceeds the achievable success rate; "
            "capture radius clamped to its feasibility bound",
            file=sys.stderr,
        )
    if args.out:
        doc["env"]["capture_radius"] = result.capture_radius
        doc["env"]["alpha"] = result.alpha_hat
        doc["calibration"] = {
            "target_alpha": result.target,
            "alpha_hat": result.alpha_hat,
            "capture_radius": result.capture_radius,
            "trials": result.trials,
            "seed": seed,
        }
        cfg.save_config(doc, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_train(args) -> int:
    doc = cfg.load_config(args.config)
    env = cfg.env_from(doc)
    spiral = cfg.spiral_from(doc)
    sensors = cfg.sensors_from(doc)
    seed = args.seed if args.seed is not None else env.rng_seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.dataset:
        path = Path(args.dataset)
        if not path.exists():
            print(f"error: dataset not found: {path}", file=sys.stderr)
            return 2
        records = load_dataset(path, env)
    else:
        records = generate_dataset(
            env, sensors, args.generate, derive_rng(seed, STREAM_DATASET), spiral
        )
        save_dataset(records, out_dir / "dataset.csv")

    matched = sum(1 for r in records if r.peg_type == r.hole_type)
    print(f"records           : {len(records)} ({matched} matched / "
          f"{len(records) - matched} mismatched)")

    history: list[float] = []
    params = fit_parameters(
        records, init=None, lr=args.lr, epochs=args.epochs,
        alpha=env.alpha, history_out=history,
    )
    write_csv(
        out_dir / "loss.csv", ("epoch", "mean_nll"),
        [(e + 1, history[e]) for e in range(len(history))],
    )

    window = 50
    if len(history) >= 2 * window:
        trailing_ok = (
            float(np.mean(history[-window:]))
            <= float(np.mean(history[-2 * window:-window])) + 1e-12
        )
    else:
        trailing_ok = history[-1] <= history[0] + 1e-12
    print(f"final mean NLL    : {history[-1]}")
    print(f"trailing window loss non-increasing: {trailing_ok}")

    cov_oracle = mle_covariance_oracle(
        np.array([r.obs for r in records]), np.array([r.position for r in records])
    )
    tpr_oracle, fpr_oracle = mle_confusion_oracle(
        [(r.peg_type == r.hole_type, r.o_match) for r in records]
    )
    learned_cov = params.position_cov
    rel = float(
        np.linalg.norm(learned_cov - cov_oracle) / np.linalg.norm(cov_oracle)
    )
    print(f"learned cov       : {learned_cov.tolist()}")
    print(f"oracle cov        : {cov_oracle.tolist()}")
    print(f"cov rel. gap      : {rel}")
    print(f"learned (tpr,fpr) : ({params.tpr}, {params.fpr})")
    print(f"oracle  (tpr,fpr) : ({tpr_oracle}, {fpr_oracle})")

    models = params.to_filter_models()
    params_path = out_dir / "learned_params.json"
    params_path.write_text(
        json.dumps(cfg.learned_to_doc(models), indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {params_path}")
    return 0


def cmd_experiment(args) -> int:
    doc = cfg.load_config(args.config)
    env = cfg.env_from(doc)
    if args.params:
        path = Path(args.params)
        if not path.exists():
            print(f"error: params file not found: {path}", file=sys.stderr)
            return 2
        lp = json.loads(path.read_text())
        learned = FilterModels(
            position=PositionNoiseModel(np.array(lp["position_cov"], dtype=float)),
            match=MatchObservationModel(tpr=float(lp["tpr"]), fpr=float(lp["fpr"])),
        )
    else:
        learned = cfg.learned_from(doc)

    seed = args.seed if args.seed is not None else env.rng_seed
    trials = args.trials if args.trials is not None else DEFAULT_TRIALS[args.kind]
    spec = ExperimentSpec(
        kind=args.kind,
        env=env,
        spiral=cfg.spiral_from(doc),
        sensors=cfg.sensors_from(doc),
        learned=learned,
        trials=trials,
        seed=seed,
        variants=_parse_variants(args.variants, args.kind),
        steps=args.steps,
        step_cap=args.step_cap,
        seed_groups=args.seed_groups,
        threads=threads_from_env(args.threads),
    )
    metric_rows, step_rows = run_experiment(spec)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    write_csv(
        metrics_path, METRIC_COLUMNS,
        [(r.experiment, r.variant, r.trial, r.step, r.metric, r.value, r.seed)
         for r in metric_rows],
    )
    steps_path = out_dir / "steps.csv"
    write_csv(
        steps_path, STEP_COLUMNS,
        [tuple(row[c] for c in STEP_COLUMNS) for row in step_rows],
    )
    validate_metrics_csv(metrics_path)
    validate_steps_csv(steps_path)

    print(f"experiment        : {args.kind} ({trials} trials, seed {seed})")
    for variant in spec.variants:
        rows = [r for r in metric_rows if r.variant == variant.value]
        if args.kind == "position_estimation":
            first = next(r for r in rows if r.metric == "pos_error_mean" and r.step == 0)
            last = next(
                r for r in rows
                if r.metric == "pos_error_mean" and r.step == spec.steps
            )
            print(f"  {variant.value}: mean error {first.value:.4f} m -> {last.value:.4f} m")
        elif args.kind == "matching_insertion":
            final = next(
                r for r in rows
                if r.metric == "success_rate" and r.step == env.horizon_high
            )
            print(f"  {variant.value}: success within {env.horizon_high} steps = {final.value:.3f}")
        else:
            iv = next(r for r in rows if r.metric == "intervention_rate")
            cm = next(
                r for r in rows
                if r.metric == "cum_attempts_mean" and r.step == env.n_holes
            )
            print(f"  {variant.value}: interventions {iv.value:.3f}, "
                  f"mean cumulative attempts {cm.value:.1f}")
    print(f"wrote {metrics_path} and {steps_path}")
    return 0


def cmd_replay(args) -> int:
    steps_path = Path(args.results) / "steps.csv"
    if not steps_path.exists():
        print(f"error: no steps.csv under {args.results}", file=sys.stderr)
        return 2
    with open(steps_path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [r for r in reader if int(r["trial"]) == args.trial]
    if not rows:
        print(f"error: no records for trial {args.trial}", file=sys.stderr)
        return 2
    current = None
    for row in rows:
        key = (row["variant"], row["peg_index"])
        if key != current:
            current = key
            print(f"[{row['experiment']}] trial {args.trial} variant {row['variant']} "
                  f"peg#{row['peg_index']} (type {row['peg_type']}) -> {row['status']}")
        xi = ", ".join(f"{float(x):.3f}" for x in row["xi"].split("|"))
        print(f"  t={row['step']:>3} hole={row['chosen_hole']} "
              f"start=({float(row['start_x']):+.4f},{float(row['start_y']):+.4f}) "
              f"beta={row['beta']} mu=({float(row['mu_x']):+.4f},{float(row['mu_y']):+.4f}) "
              f"err={float(row['pos_error']):.4f} xi=[{xi}] fitted={row['fitted']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="belieffit",
        description="Belief-space object fitting: calibration, training, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="tune the capture radius to a target success rate")
    p.add_argument("--config", default=None)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--target-alpha", type=float, default=None)
    p.add_argument("--out", default=None, help="write the calibrated config here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="fit filter noise parameters on interaction data")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None, help="existing dataset CSV")
    p.add_argument("--generate", type=int, default=3000,
                   help="generate this many interactions when no dataset is given")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="train_out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="run one of the benchmark studies")
    p.add_argument("kind", choices=sorted(KIND_IDS))
    p.add_argument("--config", default=None)
    p.add_argument("--params", default=None, help="learned-parameters JSON file")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variants", default=None,
                   help="comma-separated variant names (default: per-kind set)")
    p.add_argument("--steps", type=int, default=5,
                   help="interaction steps for position_estimation")
    p.add_argument("--step-cap", type=int, default=30,
                   help="per-peg attempt cap for assembly")
    p.add_argument("--seed-groups", type=int, default=5,
                   help="noise seed groups for matching_insertion")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("replay", help="dump the per-step log of one trial")
    p.add_argument("--results", required=True)
    p.add_argument("--trial", type=int, required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OptimizationFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BeliefFitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
