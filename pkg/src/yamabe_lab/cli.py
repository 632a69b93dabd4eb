"""Command line entry point: ``yamabe-lab {run,verify,list-builtins,emit-plot-data}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .background import InvalidDimension
from .config import BUILTINS, ConfigError, load_scenario
from .runner import EXIT_ERROR, OUT_ENV, default_out_dir, emit_plot_data, format_table, run_batch, verify_suite


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yamabe-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    out_help = f"output directory (default: ${OUT_ENV} or ./yamabe_out)"

    run = sub.add_parser("run", help="run scenario files")
    run.add_argument("configs", nargs="+", metavar="config")
    run.add_argument("--out", default=None, help=out_help)
    run.add_argument("--jobs", type=int, default=1)

    verify = sub.add_parser("verify", help="run the builtin scenarios and print the check table")
    verify.add_argument("--out", default=None, help=out_help)
    verify.add_argument("--jobs", type=int, default=1)
    verify.add_argument("--seed", type=int, default=None, help="override the seed of every builtin")

    lb = sub.add_parser("list-builtins", help="list builtin scenarios")
    lb.add_argument("--dump", metavar="NAME", help="print the scenario file of one builtin")

    plot = sub.add_parser("emit-plot-data", help="write gnuplot column files for a run_report.json")
    plot.add_argument("report")
    plot.add_argument("--out", default=None, help="default: <report folder>/plot")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "list-builtins":
        if args.dump:
            if args.dump not in BUILTINS:
                print(f"no builtin named {args.dump!r}", file=sys.stderr)
                return EXIT_ERROR
            print(BUILTINS[args.dump][1], end="")
            return 0
        for name, (desc, _) in BUILTINS.items():
            print(f"{name:<18} {desc}")
        return 0

    if args.command == "emit-plot-data":
        try:
            files = emit_plot_data(args.report, args.out)
        except (OSError, ValueError, KeyError) as exc:
            print(f"emit-plot-data: {exc}", file=sys.stderr)
            return EXIT_ERROR
        for f in files:
            print(f)
        return 0

    if args.command == "verify":
        return verify_suite(args.out, args.jobs, args.seed).exit_code

    try:
        scenarios = [load_scenario(p) for p in args.configs]
    except (ConfigError, InvalidDimension) as exc:
        print(f"run: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        result = run_batch(scenarios, args.out if args.out else default_out_dir(), args.jobs)
    except ValueError as exc:
        print(f"run: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(format_table(result.reports))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
