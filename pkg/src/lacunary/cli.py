"""Command-line entry point: ``lacunary <experiment> [--config PATH] [--seed N] ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .arith import BudgetExceeded
from .experiments import DEFAULT_CONFIG, EXPERIMENTS, ConfigError, ExperimentReport, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # The same flags are attached to the top parser and to every subcommand, so they may
    # appear before or after the subcommand name. SUPPRESS keeps the subparser from
    # overwriting a value given earlier with its default.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=d(None), help="key=value config file")
    p.add_argument("--seed", type=int, default=d(0), help="RNG seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, default=d(None), help="directory for JSON and CSV outputs")
    p.add_argument("--budget", type=int, default=d(None), help="operation budget per enumeration")
    p.add_argument("--json", action="store_true", default=d(False), help="print the JSON report")
    p.add_argument("--strict", action="store_true", default=d(False),
                   help="exit 1 when any check fails")
    p.add_argument("--deterministic", action="store_true", default=d(False),
                   help="omit timestamps so reruns give byte-identical JSON")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lacunary",
        description="Numerical experiments on lacunary discrete maximal operators over integral forms.",
        parents=[_global_flags(suppress=False)])
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT")
    sub.required = True
    for name, fn in EXPERIMENTS.items():
        doc = (fn.__doc__ or "").strip().splitlines()
        sub.add_parser(name, parents=[_global_flags(suppress=True)], help=doc[0] if doc else None)
    return parser


def _emit(report: ExperimentReport, args) -> None:
    text = report.to_json(args.deterministic)
    if args.out is not None:
        path = Path(args.out) / f"{report.name}.json"
        report.outputs.append(str(path))
        text = report.to_json(args.deterministic)
        path.write_text(text + "\n")
    if args.json:
        print(text)
    else:
        print("\n".join(report.summary_lines()))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config) if args.config is not None else dict(DEFAULT_CONFIG)
        report = EXPERIMENTS[args.experiment](cfg, seed=args.seed, budget=args.budget, out_dir=args.out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(report, args)
    if any("budget_exhausted" in c.params for c in report.checks):
        return EXIT_BUDGET
    if args.strict and not report.passed:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
