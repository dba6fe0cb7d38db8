"""Command-line front end.

Subcommands: certify, converge, paths.  Each reads one JSON experiment
config and writes results into a timestamped directory.  Exit codes:
0 success, 1 verdict failure (or aborted paths), 2 config error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ExperimentConfig
from .errors import ConfigError
from .runner import run_certify, run_convergence, run_paths


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflectsim",
        description="Penalized-drift simulation of reflected diffusions")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("certify", "check spike, decay, and direction emulation of a family"),
        ("converge", "run the level grid against a reference ensemble"),
        ("paths", "dump individual trajectories"),
    ]
    for name, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, metavar="PATH",
                       help="JSON experiment configuration")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output root (default: the config's output_dir)")
        p.add_argument("--workers", type=int, default=1, metavar="N",
                       help="worker processes for penalized ensembles")
        p.add_argument("--seed", type=int, default=None, metavar="U64",
                       help="master seed override")
        if name == "paths":
            p.add_argument("--count", type=int, default=1, metavar="K",
                           help="number of trajectories")
            p.add_argument("--summary-only", action="store_true",
                           help="skip per-step trajectory files")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            config = config.with_master_seed(args.seed)
        if args.workers < 1:
            raise ConfigError("must be a positive integer", location="--workers")
        if args.command == "certify":
            code, out_dir = run_certify(config, args.out, workers=args.workers)
            print(f"certification {'PASS' if code == 0 else 'FAIL'}: {out_dir}")
        elif args.command == "converge":
            code, out_dir = run_convergence(config, args.out, workers=args.workers)
            status = "ok" if code == 0 else "had aborted paths"
            print(f"convergence run {status}: {out_dir}")
        else:
            code, out_dir = run_paths(config, args.out, count=args.count,
                                      dump=not args.summary_only,
                                      workers=args.workers)
            status = "ok" if code == 0 else "had aborted paths"
            print(f"trajectory run {status}: {out_dir}")
        return code
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
