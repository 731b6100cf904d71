"""Command-line interface: run experiments, validate configs, demo walkthrough.

Exit codes: 0 success, 2 configuration error, 3 I/O error.  Protocol aborts
inside sessions are experiment data, not failures.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import __version__
from .harness import load_config, run_demo, run_experiment
from .protocol import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mqdc",
        description="Deterministic simulator of an authenticated multiuser "
                    "quantum direct communication protocol.")
    parser.add_argument("--version", action="version", version=f"mqdc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", help="path to the JSON experiment config")
    run.add_argument("--seed", type=int, default=None,
                     help="override the base seed")
    run.add_argument("--trials", type=int, default=None,
                     help="override the trial count")
    run.add_argument("--out", default=None,
                     help="override the report output path")
    run.add_argument("--debug-unsafe", action="store_true",
                     help="allow printing secret material (none in run output)")

    validate = sub.add_parser("validate", help="validate a config file and exit")
    validate.add_argument("config", help="path to the JSON experiment config")

    demo = sub.add_parser("demo", help="print the three-bit scripted walkthrough")
    demo.add_argument("--debug-unsafe", action="store_true",
                      help="also print identities and secret state choices")
    demo.add_argument("--out", default=None,
                      help="write the walkthrough transcript as JSON")
    return parser


def _cmd_run(args) -> int:
    spec = load_config(args.config)
    if args.seed is not None:
        spec = replace(spec, base=replace(spec.base, seed=args.seed))
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    results = run_experiment(spec, out_path=args.out)
    for stats in results:
        print(f"{stats.scenario}: trials={stats.trials} "
              f"auth_pass_rate={stats.auth_pass_rate:.6g} "
              f"fidelity={stats.message_fidelity:.6g} "
              f"channel_err={stats.channel_check_error_rate:.6g} "
              f"swap_err={stats.swap_check_error_rate:.6g} "
              f"eve_recovery={stats.eve_recovery_rate:.6g}")
        print(f"  duration: {stats.duration_seconds:.3f}s", file=sys.stderr)
    return 0


def _cmd_validate(args) -> int:
    load_config(args.config)
    print(f"ok: {args.config}")
    return 0


def _cmd_demo(args) -> int:
    run_demo(debug_unsafe=args.debug_unsafe, out_path=args.out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "validate": _cmd_validate, "demo": _cmd_demo}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
