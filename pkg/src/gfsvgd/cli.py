"""Command-line entry point: ``gfsvgd run|sweep|report``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
The default output root is taken from ``$GFSVGD_OUTPUT_ROOT`` (else ``./runs``).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .errors import ConfigError, NumericalAbort
from .harness import (OUTPUT_ROOT_ENV, default_output_root, load_config, load_config_dir,
                      report, summarize, sweep, write_summary)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _parser():
    parser = argparse.ArgumentParser(prog="gfsvgd", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every experiment in one config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, help="override the seed (replaces any seed sweep)")
    run.add_argument("--out", type=Path, help=f"output root (default ${OUTPUT_ROOT_ENV} or ./runs)")
    run.add_argument("--timing", action="store_true",
                     help="record wall-clock times; CSVs are then no longer byte-reproducible")

    sw = sub.add_parser("sweep", help="run all *.json configs in a directory")
    sw.add_argument("--config-dir", required=True, type=Path)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", type=Path)
    sw.add_argument("--timing", action="store_true")

    rep = sub.add_parser("report", help="re-aggregate run CSVs into a summary table")
    rep.add_argument("--in", dest="in_dir", required=True, type=Path)
    return parser


def _print_summary(rows, stream):
    for row in rows:
        print(f"{row['label']:<48} runs={row['runs']:<3} failed={row['failed']:<3} "
              f"mmd2={row['mmd2_mean']:.6g} +- {row['mmd2_std']:.3g}  "
              f"mse_mean={row['mse_mean_mean']:.4g}  mse_var={row['mse_var_mean']:.4g}",
              file=stream)


def _finish(results, stream):
    failed = [r for r in results if not r.ok]
    for res in failed:
        print(f"FAILED {res.config.stem}: {res.error}", file=sys.stderr)
    if any(r.error_kind == "numeric" for r in failed):
        return EXIT_NUMERIC
    if failed:
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = sys.stdout
    try:
        if args.command == "run":
            configs = load_config(args.config)
            if args.seed is not None:
                configs = [dataclasses.replace(c, seed=args.seed) for c in configs]
                configs = list({c.stem: c for c in configs}.values())
            if args.timing:
                configs = [dataclasses.replace(c, timing=True) for c in configs]
            root = args.out if args.out is not None else Path(default_output_root())
            results = sweep(configs, 1, root)
            for res in results:
                if res.ok:
                    print(res.csv_path, file=out)
            return _finish(results, out)
        if args.command == "sweep":
            configs = load_config_dir(args.config_dir)
            if args.timing:
                configs = [dataclasses.replace(c, timing=True) for c in configs]
            if args.jobs < 1:
                raise ConfigError("--jobs must be at least 1")
            root = args.out if args.out is not None else Path(default_output_root())
            results = sweep(configs, args.jobs, root)
            _print_summary(summarize(results), out)
            return _finish(results, out)
        rows = report(args.in_dir)
        write_summary(rows, Path(args.in_dir) / "report.csv")
        _print_summary(rows, out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
