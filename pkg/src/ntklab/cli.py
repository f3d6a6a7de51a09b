"""Command-line entry point.

    ntklab SUBCOMMAND [--config PATH] [--seed U64] [--out DIR] [--override key=value ...]

Subcommands: train | gen | sgd | margin | kernel | xor-margin | ntk-lb |
random-label | kernel-complexity | all.  Exit codes: 0 success, 1 validation
error, 2 a pass/fail check failed, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import EXPERIMENTS, ExperimentConfig, run_all, run_experiment
from .util import ValidationError

SUBCOMMANDS = list(EXPERIMENTS) + ["all"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ntklab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="config override, repeatable (dotted keys reach dist.*)")
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ValidationError("seed must be a nonnegative 64-bit integer")
            config.seed = args.seed
        if args.out is not None:
            config.out_dir = args.out
        for assignment in args.override:
            config.apply_override(assignment)
        if args.subcommand == "all":
            artifacts = run_all(config)
            ok = all(a.passed for a in artifacts)
            for a in artifacts:
                print(f"{a.summary['experiment']}: {'pass' if a.passed else 'FAIL'} -> {a.out_dir}")
        else:
            config.experiment = args.subcommand
            art = run_experiment(config)
            ok = art.passed
            for claim in art.summary["claims"]:
                print(f"[{'pass' if claim['pass'] else 'FAIL'}] {claim['claim']}: "
                      f"observed={claim['observed']} threshold={claim['threshold']}")
            print(f"artifacts -> {art.out_dir}")
        return 0 if ok else 2
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
