"""Command-line entry point: ``elastolattice <experiment> --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .experiments import EXPERIMENTS, write_report
from .reference import HorizonError

logger = logging.getLogger("elastolattice")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elastolattice",
                                     description="Spring-mass chain experiments and diagnostics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="parallel refinement rows")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        report = EXPERIMENTS[args.command](cfg, threads=args.threads)
    except (ConfigError, HorizonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest = write_report(report, cfg, args.out or cfg.output)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f" ({c.detail})" if c.detail else ""))
    if report.horizon_error:
        print(f"HORIZON {report.horizon_error}")
    print(f"manifest: {manifest}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
