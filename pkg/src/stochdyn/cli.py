"""Command-line entry point: ``stochdyn simulate | truncation-study | self-test``.

Exit codes: 0 success, 1 configuration error, 2 invariant or acceptance failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .master_equation import InvariantViolation
from .scenarios import ConfigError, config_help, parse_config, run_scenario, truncation_study

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


def _workers(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("--workers must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stochdyn",
        description="Ensemble-average dynamics under stochastic Hamiltonians.",
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario config",
                         epilog=config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sim.add_argument("config", help="YAML scenario config")
    sim.add_argument("--out", help="output directory (overrides out_dir)")
    sim.add_argument("--workers", type=_workers, default=os.cpu_count() or 1,
                     help="oracle worker processes (default: available CPUs)")
    sim.add_argument("--oracle", choices=("on", "off"), help="override the config's oracle flag")

    tr = sub.add_parser("truncation-study", help="compare Fock truncations 3, 5, 8, 12 for an ion config")
    tr.add_argument("config", help="YAML ion_heating config")
    tr.add_argument("--out", help="also write truncation.csv and truncation.txt here")

    sub.add_parser("self-test", help="run the acceptance suite")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = parse_config(args.config)
            oracle = None if args.oracle is None else args.oracle == "on"
            run = run_scenario(cfg, out_dir=args.out, workers=args.workers, oracle=oracle)
            print(run.report.to_text().split("per-time deviations:")[0], end="")
            print(f"wrote {run.csv_path} and {run.report_path}")
            return EXIT_OK if run.report.passed else EXIT_FAILURE
        if args.command == "truncation-study":
            cfg = parse_config(args.config)
            print(truncation_study(cfg, out_dir=args.out).to_text(), end="")
            return EXIT_OK
        from .acceptance import run_all

        results = run_all(verbose=True)
        return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
