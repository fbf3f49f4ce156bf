"""gaia command line: analyze a function, run a scenario, compare three runs.

Exit codes: 0 success, 1 usage, 2 invalid input (scenario validation,
strict-mode syntax errors, mismatched traces), 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from gaia import __version__
from gaia.analyzer import AnalyzerConfig, analyze
from gaia.cost import TraceMismatch, compare_totals
from gaia.scenario import (
    DEPLOYMENT_MODES,
    ScenarioError,
    load_scenario,
    preset_names,
    read_cost_total,
    read_label,
    read_response_times,
    run_scenario,
    summarize,
    write_outputs,
)
from gaia.simulator import NoEligibleNode

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3

STATS_COLUMNS = ("mode", "label", "requests", "min", "p25", "p50", "p75", "max", "cost")
SAVINGS_COLUMNS = ("gaia_vs_cpu_pct", "gaia_vs_gpu_pct", "gpu_vs_cpu_pct", "cheapest")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gaia", description="Execution-mode analysis and CPU/GPU adaptation simulator.")
    p.add_argument("--version", action="version", version=f"gaia {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log controller decisions to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="classify a function source into an execution mode")
    a.add_argument("path", help="Python source file")
    a.add_argument("--strict-parse", action="store_true", help="fail on syntax errors instead of defaulting to cpu")
    a.add_argument("--big-op-threshold", type=int, default=None, metavar="N",
                   help="element count at which a tensor operation counts as large")

    r = sub.add_parser("run", help="run a scenario file or preset")
    r.add_argument("scenario", help=f"scenario YAML, earlier output directory, or preset ({', '.join(preset_names())})")
    r.add_argument("--deployment-mode", choices=DEPLOYMENT_MODES, default=None,
                   help="override every function's deployment mode")
    r.add_argument("--seed", type=int, default=None, help="first seed (default: scenario seed)")
    r.add_argument("--reps", type=int, default=None, help="repetitions (default: scenario value)")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--plot", action="store_true", help="also write PNG figures under figures/")

    c = sub.add_parser("compare", help="compare CPU, GPU and adaptive output directories")
    c.add_argument("cpu_dir")
    c.add_argument("gpu_dir")
    c.add_argument("auto_dir")
    c.add_argument("--out", default=None, help="directory for comparison.csv and figures")
    c.add_argument("--plot", action="store_true", help="write PNG figures (needs --out)")
    return p


def cmd_analyze(args, out: TextIO, err: TextIO) -> int:
    text = Path(args.path).read_text(encoding="utf-8")
    config = AnalyzerConfig() if args.big_op_threshold is None else AnalyzerConfig(big_op_threshold=args.big_op_threshold)
    try:
        report = analyze(text, config, strict=args.strict_parse)
    except SyntaxError as exc:
        err.write(f"gaia: {args.path}:{exc.lineno}:{exc.offset}: {exc.msg}\n")
        return EXIT_INVALID
    out.write(report.to_annotations())
    if report.warning:
        err.write(f"gaia: warning: {args.path}: {report.warning}; defaulted to cpu\n")
    return EXIT_OK


def default_out_dir(spec, label: str) -> Path:
    if spec.output_dir is not None:
        return spec.output_dir
    return Path("gaia-out") / f"{spec.name}-{label.lower()}"


def cmd_run(args, out: TextIO, err: TextIO) -> int:
    if args.reps is not None and args.reps < 1:
        raise _UsageError("--reps must be at least 1")
    if args.seed is not None and args.seed < 0:
        raise _UsageError("--seed must be non-negative")
    spec = load_scenario(args.scenario)
    run = run_scenario(spec, args.deployment_mode, args.seed, args.reps)
    target = Path(args.out) if args.out else default_out_dir(spec, run.label)
    written = write_outputs(run, target, plot=args.plot)
    for line in summarize(run):
        out.write(line + "\n")
    out.write(f"wrote {written}\n")
    return EXIT_OK


def _stats(values: Sequence[float]) -> list[float]:
    return [float(v) for v in np.percentile(np.asarray(values, dtype=float), [0, 25, 50, 75, 100])]


def compare_dirs(cpu_dir: Path, gpu_dir: Path, auto_dir: Path) -> tuple[list[list], list]:
    """Latency quartiles and cost per directory, plus savings and the cheapest mode."""
    dirs = {"cpu": cpu_dir, "gpu": gpu_dir, "gaia": auto_dir}
    responses = {k: read_response_times(d) for k, d in dirs.items()}
    shapes = {k: [(r["Index"], r["function_id"]) for r in rows] for k, rows in responses.items()}
    if len({len(s) for s in shapes.values()}) != 1:
        counts = ", ".join(f"{k}={len(s)}" for k, s in shapes.items())
        raise TraceMismatch(f"request counts differ: {counts}")
    if not shapes["cpu"] == shapes["gpu"] == shapes["gaia"]:
        raise TraceMismatch("request sequences differ between directories")
    totals = {k: read_cost_total(d) for k, d in dirs.items()}
    rows = []
    for k, d in dirs.items():
        latencies = [float(r["response_time"]) for r in responses[k]]
        stats = _stats(latencies) if latencies else [float("nan")] * 5
        rows.append([k, read_label(d), len(latencies)] + stats + [totals[k]])
    summary = compare_totals(totals["cpu"], totals["gpu"], totals["gaia"])
    savings = [summary.savings_pct["gaia_vs_cpu"], summary.savings_pct["gaia_vs_gpu"],
               summary.savings_pct["gpu_vs_cpu"], summary.cheapest]
    return rows, savings


def _write_comparison(rows: list[list], savings: list, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for row in rows:
        w.writerow(row[:3] + [f"{v:.6f}" for v in row[3:8]] + [f"{row[8]:.9f}"])
    fh.write("\n")
    w.writerow(SAVINGS_COLUMNS)
    w.writerow([f"{v:.2f}" for v in savings[:3]] + [savings[3]])


def cmd_compare(args, out: TextIO, err: TextIO) -> int:
    if args.plot and not args.out:
        raise _UsageError("--plot needs --out")
    dirs = [Path(args.cpu_dir), Path(args.gpu_dir), Path(args.auto_dir)]
    rows, savings = compare_dirs(*dirs)
    _write_comparison(rows, savings, out)
    if args.out:
        target = Path(args.out)
        target.mkdir(parents=True, exist_ok=True)
        with open(target / "comparison.csv", "w", newline="") as fh:
            _write_comparison(rows, savings, fh)
        if args.plot:
            from gaia.plots import plot_comparison

            plot_comparison(dirs, target)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "run": cmd_run, "compare": cmd_compare}


def main(argv: Optional[Sequence[str]] = None, out: Optional[TextIO] = None, err: Optional[TextIO] = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    # a handler on the package logger, so embedding callers keep their root config
    handler = logging.StreamHandler(err)
    handler.setFormatter(logging.Formatter("gaia: %(levelname)s: %(message)s"))
    pkg_log = logging.getLogger("gaia")
    pkg_log.addHandler(handler)
    pkg_log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args, out, err)
    except _UsageError as exc:
        err.write(f"gaia: error: {exc}\n")
        return EXIT_USAGE
    except (ScenarioError, TraceMismatch) as exc:
        err.write(f"gaia: {exc}\n")
        return EXIT_INVALID
    except (OSError, NoEligibleNode, ValueError) as exc:
        err.write(f"gaia: {exc}\n")
        return EXIT_RUNTIME
    finally:
        pkg_log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
