"""Command-line entry point.

Exit codes: 0 ok, 1 runtime error, 2 more than 20% of rows failed, 3 bad config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from symbound.config import ExperimentConfig, load_config, parse_config, serialize_config
from symbound.dynamics import load_dataset, save_dataset
from symbound.errors import ConfigError, SymboundError
from symbound.forecasters import ParameterSpace, equivariance_error
from symbound.harness import (
    CONFIG_FILE,
    build_dataset,
    make_group,
    loss_spec,
    prepare_seed,
    report,
    run_experiment,
    seeded_train_config,
    spaces,
    sweep,
)
from symbound.qweights import uniform_q
from symbound.trainers import APPROX_EQUIV, ESTIMATOR_KINDS, fit_population_surrogate, weighted_erm

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2, 3


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=d, help="INI config file")
    parser.add_argument("--seed", metavar="U64", default=d, help="master seed (experiment.seed)")
    parser.add_argument("--out", metavar="DIR", default=d, help="output directory (experiment.out_dir)")
    parser.add_argument("--jobs", metavar="INT", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker processes")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append", dest="overrides",
                        default=argparse.SUPPRESS if suppress else [],
                        help="override a config key by dotted path (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symbound", description="Symmetry-aware forecasting bound laboratory")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    sub.add_parser("generate", parents=[common], help="write one dataset per seed")
    p = sub.add_parser("train", parents=[common], help="fit estimators and write forecasters and traces")
    p.add_argument("--dataset", metavar="PATH", help="train on this dataset file instead of generating")
    p.add_argument("--kind", action="append", choices=ESTIMATOR_KINDS, help="estimator kind (repeatable)")
    sub.add_parser("bounds", parents=[common], help="estimate the estimator-independent bound terms")
    sub.add_parser("run", parents=[common], help="full experiment: train, estimate, assemble, report")
    p = sub.add_parser("sweep", parents=[common], help="one run per value of a config key")
    p.add_argument("--axis", required=True, help="config key, e.g. sym_break or experiment.N")
    p.add_argument("--values", required=True, help="comma-separated values")
    p = sub.add_parser("report", parents=[common], help="summarize a run or sweep directory")
    p.add_argument("directory", nargs="?", help="results directory (defaults to --out)")
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = list(args.overrides or [])
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"experiment.out_dir={args.out}")
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _out(config: ExperimentConfig) -> Path:
    out = Path(config.experiment.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(serialize_config(config), encoding="utf-8")
    return out


def cmd_generate(config, args) -> int:
    out = _out(config) / "datasets"
    out.mkdir(exist_ok=True)
    for i in range(config.experiment.n_seeds):
        save_dataset(build_dataset(config, i), out / f"seed{i}.jsonl")
    print(f"wrote {config.experiment.n_seeds} datasets to {out}")
    return EXIT_OK


def cmd_train(config, args) -> int:
    out = _out(config)
    (out / "forecasters").mkdir(exist_ok=True)
    (out / "traces").mkdir(exist_ok=True)
    kinds = args.kind or list(ESTIMATOR_KINDS)
    group = make_group(config)
    spec = loss_spec(config)
    if args.dataset:
        jobs = [(0, load_dataset(args.dataset))]
    else:
        jobs = [(i, build_dataset(config, i)) for i in range(config.experiment.n_seeds)]
    for i, ds in jobs:
        train_cfg = seeded_train_config(config, i)
        q = uniform_q(ds.horizon)
        budget = config.experiment.ee_budget
        if budget is None and APPROX_EQUIV in kinds:
            gen = ds.spec or config.generator
            full = ParameterSpace.full(config.experiment.radius, gen.state_bound)
            star = fit_population_surrogate(gen, config.experiment.pool_factor * ds.N, ds.T, ds.k, full,
                                            train_cfg, spec, experiment_N=ds.N)
            budget = equivariance_error(star, group, gen.state_bound)
        sp = spaces(config, group, budget or 0.0)
        for kind in kinds:
            theta, trace = weighted_erm(ds, q, sp[kind], kind, train_cfg, spec, group)
            (out / "forecasters" / f"seed{i}_{kind}.json").write_text(theta.to_json() + "\n", encoding="utf-8")
            trace.write_csv(out / "traces" / f"seed{i}_{kind}.csv")
            print(f"seed {i} {kind}: objective {trace.objectives[-1]:.6g} after {len(trace.rows)} iterations")
    return EXIT_OK


def cmd_bounds(config, args) -> int:
    out = _out(config) / "bounds"
    out.mkdir(exist_ok=True)
    failed = 0
    for i in range(config.experiment.n_seeds):
        ctx = prepare_seed(config, i)
        body = {"seed": i, "error": ctx.error}
        if not ctx.error:
            body.update(
                terms={k: {"mean": m, "stderr": s} for k, (m, s) in ctx.terms.items()},
                lemma=ctx.lemma, xi=ctx.xi, ee_star=ctx.ee_star, ee_budget=ctx.ee_budget,
                lipschitz=ctx.lip, q=ctx.q.tolist(),
            )
        else:
            failed += 1
        (out / f"seed{i}.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote bound terms for {config.experiment.n_seeds} seeds to {out}")
    return EXIT_PARTIAL if failed > 0.2 * config.experiment.n_seeds else EXIT_OK


def cmd_run(config, args) -> int:
    out = _out(config)
    result = run_experiment(config, out, args.jobs)
    report(out, sys.stdout)
    if result.failed:
        print(f"{result.failed} of {len(result.rows)} rows failed", file=sys.stderr)
    return result.exit_code


def cmd_sweep(config, args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    out = _out(config)
    results, verdicts = sweep(config, args.axis, values, out, args.jobs)
    report(out, sys.stdout)
    for name, v in sorted(verdicts.items()):
        print(f"verdict {name}: {'PASS' if v['passed'] else 'FAIL'}")
    rows = sum(len(r.rows) for r in results)
    failed = sum(r.failed for r in results)
    return EXIT_PARTIAL if failed > 0.2 * rows else EXIT_OK


def cmd_report(config, args) -> int:
    report(args.directory or config.experiment.out_dir, sys.stdout)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "bounds": cmd_bounds,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SymboundError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
