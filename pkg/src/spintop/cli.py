"""Command-line entry point.

Subcommands map one-to-one onto the runner drivers; every run reads a
TOML config, writes one data table plus summary.jsonl and timings.jsonl
into the output directory, and prints a one-line result.

Exit codes: 0 success, 2 config error, 3 numerical degeneracy,
4 engine or parameter mismatch.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import (
    ConfigError,
    DegenerateOutcomeError,
    EngineMismatchError,
    FrameDegeneracyError,
    IntegratorStepError,
    NumericalDegeneracyError,
    ParameterError,
)
from .runner import COMMANDS, run_command

_DESCRIPTIONS = {
    "trajectory": "evolve measurement-feedback trajectories and write per-step rows",
    "portrait": "per-IC similarity of an engine against the classical map over an IC grid",
    "lyapunov": "largest divergence rate over an IC grid (classical or hp engine)",
    "averaged": "record-averaged density-matrix map (dephase then kick)",
    "sme": "continuous-measurement master equation with per-window feedback",
    "similarity": "per-trajectory similarity and distance against the classical map",
    "sweep-sigma": "mean max distance to the classical map versus resolution sigma",
    "sweep-od": "mean similarity versus optical depth with scattering decoherence",
}


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="TOML run configuration")
    common.add_argument("--seed", type=_non_negative_int, default=0,
                        help="master seed for all random streams (default 0)")
    common.add_argument("--engine", choices=["classical", "hp", "quantum"],
                        default=None,
                        help="trajectory engine (default depends on the subcommand)")
    common.add_argument("--out", default="out", metavar="DIR",
                        help="output directory (default ./out)")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker threads; results are identical for any value")
    common.add_argument("--format", dest="fmt", choices=["csv", "jsonl"],
                        default="csv", help="data table format (default csv)")

    parser = argparse.ArgumentParser(
        prog="spintop",
        description="Collective-spin kicked-top dynamics from weak "
                    "measurement plus feedback.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=_DESCRIPTIONS[name],
                       description=_DESCRIPTIONS[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        summary = run_command(
            args.command, cfg, engine=args.engine, seed=args.seed,
            out_dir=args.out, threads=args.threads, fmt=args.fmt,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalDegeneracyError, DegenerateOutcomeError,
            FrameDegeneracyError, IntegratorStepError) as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return 3
    except (EngineMismatchError, ParameterError) as exc:
        print(f"engine/parameter mismatch: {exc}", file=sys.stderr)
        return 4

    files = ", ".join(o["file"] for o in summary["outputs"])
    extra = ""
    for key in ("median_S", "mean_S", "mean_dmax"):
        if key in summary:
            extra += f" {key}={summary[key]:.4g}"
    print(f"{args.command}: wrote {files} to {args.out}{extra}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
