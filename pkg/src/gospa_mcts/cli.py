"""Command line entry point: ``gospa-mcts run | summarise | plot-data``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, load_experiment
from .experiment import emit_plot_data, read_records, run_experiment, summarise, write_summary

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gospa-mcts", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo experiment")
    run.add_argument("config", help="experiment YAML file")
    run.add_argument("--runs", type=int, help="override the number of Monte-Carlo runs")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--workers", type=int, help="parallel worker processes")
    run.add_argument("--steps", type=int, help="override the number of time steps")
    run.add_argument("--out", help="override the output directory")
    run.add_argument("--debug-planner", action="store_true",
                     help="write per-step planner diagnostics as JSON lines")

    for name, text in (("summarise", "recompute the summary table"),
                       ("plot-data", "write plot-ready CSV files")):
        s = sub.add_parser(name, help=text)
        s.add_argument("records_dir")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_experiment(args.config)
            if args.runs is not None:
                if args.runs < 1:
                    raise ConfigError("--runs must be >= 1")
                cfg.runs = args.runs
            if args.seed is not None:
                cfg.seed = args.seed
            if args.steps is not None:
                if args.steps < 1:
                    raise ConfigError("--steps must be >= 1")
                cfg.scenario.steps = args.steps
            if args.out:
                cfg.output = args.out
            records = run_experiment(cfg, workers=args.workers, debug_planner=args.debug_planner)
            rows = summarise(records, [a.name for a in cfg.algorithms])
            print(json.dumps(rows, indent=2))
        else:
            if not os.path.exists(os.path.join(args.records_dir, "records.csv")):
                raise ConfigError(f"no records.csv in {args.records_dir}")
            records = read_records(args.records_dir)
            if args.command == "summarise":
                print(json.dumps(write_summary(args.records_dir, records), indent=2))
            else:
                for path in emit_plot_data(args.records_dir, records).values():
                    print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
