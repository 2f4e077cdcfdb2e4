"""Command line entry point.

    porous-pinn run --config run.ini --mode adaptive --seed 0 --out runs/a
    porous-pinn compare --a runs/f --b runs/a
    porous-pinn oracle --config run.ini --out runs/exact

Exit codes: 0 success, 1 configuration error, 2 training divergence.
Set ``POROUS_PINN_THREADS`` to cap the BLAS thread pool (e.g. 1 for
bit-reproducible runs).
"""
from __future__ import annotations

import argparse
import logging
import sys
from contextlib import nullcontext

from .errors import ConfigurationError, NumericalError
from .experiment import (
    compare_runs,
    export_oracle,
    format_comparison,
    load_manifest,
    load_report,
    parse_manifest,
    run_experiment,
    thread_hint,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="porous-pinn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one model and export its artifacts")
    run.add_argument("--config", help="manifest file (defaults used when omitted)")
    run.add_argument("--mode", choices=("fixed", "adaptive"))
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")

    cmp_ = sub.add_parser("compare", help="compare the reports of two run directories")
    cmp_.add_argument("--a", required=True)
    cmp_.add_argument("--b", required=True)

    ora = sub.add_parser("oracle", help="export the analytic front and pressure only")
    ora.add_argument("--config")
    ora.add_argument("--out", required=True)
    return p


def _manifest(args):
    overrides = {k: getattr(args, k, None) for k in ("mode", "seed", "out")}
    if args.config:
        return load_manifest(args.config, **overrides)
    return parse_manifest("", **overrides)


def _limits():
    n = thread_hint()
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        if args.command == "run":
            with _limits():
                report = run_experiment(_manifest(args))
            print(report.to_json())
            return EXIT_OK if report.status != "diverged" else EXIT_DIVERGED
        if args.command == "compare":
            a, b = load_report(args.a), load_report(args.b)
            names = (a.mode, b.mode) if a.mode != b.mode else ("a", "b")
            print(format_comparison(compare_runs(a, b, names), names))
            return EXIT_OK
        if args.command == "oracle":
            export_oracle(_manifest(args).problem, args.out)
            return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_CONFIG


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
