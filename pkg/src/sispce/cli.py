"""Command-line front end: list problems, run experiments, validate formulas."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .problems import get_problem, registry

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _cmd_list(_args) -> int:
    rows = [(p.name, p.dimension, p.p_ref, p.description) for p in registry()]
    width = max(len(r[0]) for r in rows)
    print(f"{'name':<{width}}  {'d':>4}  {'p_ref':>10}  description")
    for name, d, p_ref, desc in rows:
        print(f"{name:<{width}}  {d:>4}  {p_ref:>10.3e}  {desc}")
    return 0


def _cmd_run(args) -> int:
    problem = get_problem(args.problem)
    overrides = _load_config(args.config)
    report = bench.run_experiment(problem, args.method, args.reps, args.seed, overrides)
    print(json.dumps(report.to_summary()["aggregates"], indent=2))
    if report.n_failed:
        print(f"note: {report.n_failed} of {len(report.reps)} repetitions failed",
              file=sys.stderr)
    if args.out:
        paths = bench.emit_outputs(report, Path(args.out), plot=args.plot)
        for kind, path in paths.items():
            print(f"wrote {kind}: {path}")
    return 0


def _cmd_validate(args) -> int:
    result = bench.oracle_check(get_problem(args.problem), reps=args.reps,
                                base_seed=args.seed)
    print(json.dumps(result, indent=2))
    return 0 if result["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sispce",
        description="Rare-event estimation with SIS and subspace PCE surrogates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="print the benchmark registry").set_defaults(func=_cmd_list)

    run = sub.add_parser("run", help="run a seeded experiment")
    run.add_argument("--problem", required=True)
    run.add_argument("--method", required=True, choices=bench.METHODS)
    run.add_argument("--reps", type=int, default=20)
    run.add_argument("--seed", type=int, default=2024)
    run.add_argument("--config", help="TOML file with configuration overrides")
    run.add_argument("--out", help="directory for CSV/JSON (and SVG) output")
    run.add_argument("--plot", action="store_true", help="also write an SVG error plot")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a problem against the sampling oracle")
    val.add_argument("--problem", required=True)
    val.add_argument("--reps", type=int, default=50)
    val.add_argument("--seed", type=int, default=777)
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
