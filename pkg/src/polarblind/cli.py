"""Command line front end.

Subcommands:
  run               Monte Carlo sweep from a JSON config; writes a CSV table.
  bench             Scaling benchmarks for the two estimation stages.
  dump-dictionary   Write the polar grid of a config as CSV.

Exit codes: 0 on success, 1 for configuration/usage problems, 2 for runtime
failures.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from .errors import ConfigError, PolarBlindError
from .experiment import (
    bench_bcd,
    bench_bomp,
    build_grid_point,
    emit_bench_csv,
    emit_csv,
    emit_plotdata,
    fit_loglog_slope,
    load_config,
    run_experiment,
    run_traced_trial,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; we reserve 2 for runtime
    # failures and report usage problems as configuration errors instead.
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="polarblind", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a Monte Carlo sweep")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default="results.csv", help="output CSV path")
    p_run.add_argument(
        "--threads", type=int, default=None, help="worker processes (default: all cores)"
    )
    p_run.add_argument(
        "--trace",
        default=None,
        metavar="PATH",
        help="replay trial 0 with tracing; writes PATH (on-grid stage) and a "
        "matching *-bcd.csv (refinement stage)",
    )
    p_run.add_argument("--plot-data", default=None, help="also emit gnuplot blocks here")

    p_bench = sub.add_parser("bench", help="scaling benchmarks")
    p_bench.add_argument("--which", choices=("bomp", "bcd", "both"), default="both")
    p_bench.add_argument("--out", default=".", help="directory for bench CSVs")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--repeats", type=int, default=3)

    p_dump = sub.add_parser("dump-dictionary", help="write the polar grid as CSV")
    p_dump.add_argument("--config", required=True, help="JSON experiment config")
    p_dump.add_argument("--out", required=True, help="output CSV path")
    return parser


def _trace_paths(path: str) -> tuple[str, str]:
    root, ext = os.path.splitext(path)
    return path, f"{root}-bcd{ext or '.csv'}"


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    n_workers = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if n_workers < 1:
        raise ConfigError("--threads must be >= 1")
    result = run_experiment(cfg, n_workers=n_workers)
    emit_csv(result, args.out)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    if args.plot_data:
        emit_plotdata(result, args.plot_data)
        print(f"wrote plot data to {args.plot_data}")
    if args.trace:
        grid = build_grid_point(cfg, cfg.sweep_values[0])
        bomp_rows, bcd_rows = run_traced_trial(grid, cfg.seed)
        bomp_path, bcd_path = _trace_paths(args.trace)
        with open(bomp_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["sweep", "user", "atom", "angle_rad", "inv_distance_per_m", "relative_residual"]
            )
            writer.writerows(bomp_rows)
        with open(bcd_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user", "sweep", "block", "objective_f", "phi", "step", "backtracks"])
            writer.writerows(bcd_rows)
        print(f"wrote traces to {bomp_path} and {bcd_path}")
    return 0


def _cmd_bench(args) -> int:
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    os.makedirs(args.out, exist_ok=True)
    if args.which in ("bomp", "both"):
        rows = bench_bomp(repeats=args.repeats, seed=args.seed)
        out = os.path.join(args.out, "bench_bomp.csv")
        emit_bench_csv(rows, out, "dictionary_size")
        print(f"on-grid stage: log-log slope vs Q = {fit_loglog_slope(rows):.3f} ({out})")
    if args.which in ("bcd", "both"):
        rows = bench_bcd(repeats=args.repeats, seed=args.seed)
        out = os.path.join(args.out, "bench_bcd.csv")
        emit_bench_csv(rows, out, "n_antennas")
        print(f"refinement stage: log-log slope vs N = {fit_loglog_slope(rows):.3f} ({out})")
    return 0


def _cmd_dump_dictionary(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid_point(cfg, cfg.sweep_values[0])
    grid.dictionary.export_csv(args.out)
    print(f"wrote {grid.dictionary.n_atoms} atoms to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "bench":
            return _cmd_bench(args)
        return _cmd_dump_dictionary(args)
    except (_UsageError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (PolarBlindError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
