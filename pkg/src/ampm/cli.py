"""Command line front end.

    ampm run SCENARIO --out DIR [--seed N] [--trace]
    ampm tables MODE ROLE [-k K]
    ampm report DIR

``run`` exits 0 when every measured interval agrees with the simulator's
trace within the scenario tolerances, 1 when the comparison fails and 2 when
a stage (parse, simulate, collect, write) errors out.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

from ampm.errors import AmpmError
from ampm.marking import MarkingMode, Mode, Role, build_rule_table
from ampm.report import INTERVAL_COLUMNS, RunReport, aggregate_rows, collect, compare, intervals_csv, parse_report_text
from ampm.scenario_file import parse_scenario, scenario_digest
from ampm.simnet import run

log = logging.getLogger("ampm")

EXIT_OK, EXIT_MISMATCH, EXIT_ERROR = 0, 1, 2


class _StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except (AmpmError, OSError, ValueError) as exc:
        raise _StageError(name, exc) from exc


def run_command(scenario_path, out_dir, seed=None, write_trace=False) -> int:
    try:
        scenario = _stage("parse", parse_scenario, scenario_path)
        if seed is not None:
            scenario = dataclasses.replace(scenario, seed=seed)
        result = _stage("simulate", run, scenario)
        collector = _stage("collect", collect, result)
        rows = _stage("collect", collector.results)
        comparison = _stage("verify", compare, collector, result)
        report = RunReport(scenario_digest(scenario), rows, comparison)

        out = Path(out_dir)

        def write():
            out.mkdir(parents=True, exist_ok=True)
            (out / "intervals.csv").write_text(intervals_csv(aggregate_rows(rows)))
            flows = collector.flows()
            if len(flows) > 1:
                for f in flows:
                    (out / f"intervals_flow{f}.csv").write_text(
                        intervals_csv([r for r in rows if r.flow_id == f])
                    )
            (out / "report.txt").write_text(report.to_text())
            if write_trace:
                (out / "trace.csv").write_text(result.trace.to_csv())

        _stage("write", write)
    except _StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_ERROR

    c = report.comparison
    print(
        f"{len(rows)} intervals, loss mismatches {c.loss_mismatches}, "
        f"delay mismatches {c.delay_mismatches}, max |delay error| {c.max_abs_delay_error_ns} ns"
    )
    if c.pairing_failure:
        print("interval pairing failure: measured blocks disagree with the trace "
              "(are the MP clocks within half an interval?)", file=sys.stderr)
    return EXIT_OK if c.passed else EXIT_MISMATCH


def tables_command(mode: str, role: str, k: int) -> int:
    try:
        tables = build_rule_table(MarkingMode(Mode(mode), k), Role(role))
    except (AmpmError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for t in tables:
        lo, hi = (t.time_range[1], t.time_range[0]) if t.time_range else (None, None)
        bits = f"  time key Seconds[{hi}:{lo}]" if hi is not None else ""
        print(f"{t.name}{bits}")
        rows = t.format_rows()
        w = max(len(m) for m, _ in rows + [("Match", "")])
        print(f"  {'Match'.ljust(w)} | Action")
        for m, a in rows:
            print(f"  {m.ljust(w)} | {a}")
    return EXIT_OK


def report_command(out_dir) -> int:
    out = Path(out_dir)
    try:
        summary = parse_report_text((out / "report.txt").read_text())
        with open(out / "intervals.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{'':>4}".join(INTERVAL_COLUMNS))
    for r in rows:
        print(f"{'':>4}".join(r[c].rjust(len(c)) for c in INTERVAL_COLUMNS))
    for key in ("scenario_digest", "intervals_checked", "loss_mismatches", "delay_mismatches",
                "max_abs_delay_error_ns", "pairing_failure", "verdict"):
        print(f"{key}: {summary.get(key, '')}")
    return EXIT_OK if summary.get("verdict") == "PASS" else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ampm", description="Alternate marking measurement simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and verify the measurements")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", action="store_true", help="also write trace.csv")

    p = sub.add_parser("tables", help="print the match-action rules of an MP")
    p.add_argument("mode", choices=[m.value for m in Mode])
    p.add_argument("role", choices=[r.value for r in Role])
    p.add_argument("-k", type=int, default=4, help="interval bit (default 4: 16 s)")

    p = sub.add_parser("report", help="summarize a run output directory")
    p.add_argument("dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "run":
        return run_command(args.scenario, args.out, args.seed, args.trace)
    if args.command == "tables":
        return tables_command(args.mode, args.role, args.k)
    return report_command(args.dir)


if __name__ == "__main__":
    sys.exit(main())
