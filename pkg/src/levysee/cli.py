"""Command line entry point: ``levysee <kind> [--config FILE] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, ConfigError, config_from_mapping, load_config
from .experiments import EXIT_CONFIG, run_experiment
from .parallel import WORKERS_ENV


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levysee",
        description="Monte Carlo experiments for semilinear evolution equations with Poisson jump noise.",
        epilog=f"Set {WORKERS_ENV} to run path blocks on several threads; results do not depend on it.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        sp.add_argument("--config", help="INI file with [experiment], [system] and [solver] sections")
        sp.add_argument("--seed", type=int, help="override the experiment seed")
        sp.add_argument("--out", help="output directory (default: from config, else ./results)")
        sp.add_argument("--system", help="builtin system name")
        sp.add_argument("--n-paths", type=int, dest="n_paths")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.kind) if args.config else config_from_mapping({"kind": args.kind})
        changes = {k: getattr(args, k) for k in ("seed", "out", "system", "n_paths") if getattr(args, k) is not None}
        if changes:
            cfg = cfg.with_(**changes)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = run_experiment(cfg)
    print(f"{cfg.kind}: {'PASS' if status == 0 else 'FAIL'} (exit {status}); outputs in {cfg.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
