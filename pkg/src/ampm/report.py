"""Measured-vs-oracle comparison and the files written by ``ampm run``."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Optional

from ampm.collector import Collector, IntervalResult
from ampm.simnet import SimResult, oracle_counts, oracle_delays

INTERVAL_COLUMNS = ("interval_id", "color", "tx_count", "rx_count", "loss", "delay_ns")


@dataclass
class OracleComparison:
    intervals_checked: int = 0
    loss_mismatches: int = 0
    tx_mismatches: int = 0
    delay_mismatches: int = 0
    max_abs_delay_error_ns: int = 0
    unpaired_records: int = 0
    negative_loss: int = 0
    implausible_delays: int = 0
    details: list = field(default_factory=list)

    @property
    def pairing_failure(self) -> bool:
        return bool(self.loss_mismatches or self.tx_mismatches or self.unpaired_records
                    or self.negative_loss or self.implausible_delays)

    @property
    def passed(self) -> bool:
        return not self.pairing_failure and not self.delay_mismatches


def collect(result: SimResult) -> Collector:
    c = Collector()
    c.ingest_all(result.initiator_records)
    c.ingest_all(result.terminator_records)
    return c


def compare(collector: Collector, result: SimResult) -> OracleComparison:
    sc = result.scenario
    counts = oracle_counts(result.trace, sc)
    delays = oracle_delays(result.trace, sc)
    cmp = OracleComparison()

    measured = {(r.flow_id, r.interval_id): r for r in collector.results()}
    keys = set(measured) | {k for k, (sent, _) in counts.items() if sent}
    keys |= set(delays)
    for key in sorted(keys, key=lambda k: (repr(k[0]), k[1])):
        cmp.intervals_checked += 1
        res = measured.get(key)
        sent, dropped = counts.get(key, (0, 0))
        if res is None:
            cmp.loss_mismatches += 1
            cmp.details.append(f"flow {key[0]} interval {key[1]}: no paired records")
            continue
        if sc.mode.counts_loss:
            if res.tx_count != sent:
                cmp.tx_mismatches += 1
                cmp.details.append(f"flow {key[0]} interval {key[1]}: tx {res.tx_count} != sent {sent}")
            if abs(res.loss - dropped) > sc.loss_tolerance:
                cmp.loss_mismatches += 1
                cmp.details.append(f"flow {key[0]} interval {key[1]}: loss {res.loss} != dropped {dropped}")
            if res.flagged:
                cmp.negative_loss += 1
        # a delay or delay error of half an interval means pulses of
        # different intervals were paired
        implausible = res.delay_ns is not None and 2 * abs(res.delay_ns) >= sc.mode.interval_ns
        cmp.implausible_delays += implausible
        expected = delays.get(key)
        if expected is None and res.delay_ns is None:
            continue
        if expected is None or res.delay_ns is None:
            cmp.delay_mismatches += 1
            cmp.details.append(
                f"flow {key[0]} interval {key[1]}: delay {res.delay_ns} vs expected {expected}"
            )
            continue
        err = abs(res.delay_ns - expected)
        cmp.max_abs_delay_error_ns = max(cmp.max_abs_delay_error_ns, err)
        if 2 * err >= sc.mode.interval_ns and not implausible:
            cmp.implausible_delays += 1
        if err > sc.delay_tolerance_ns:
            cmp.delay_mismatches += 1
            cmp.details.append(f"flow {key[0]} interval {key[1]}: delay error {err} ns")

    for rec in collector.unpaired():
        if rec.packet_count or rec.pulse_timestamp is not None:
            cmp.unpaired_records += 1
            cmp.details.append(
                f"flow {rec.flow_id} interval {rec.interval_id}: only {rec.role.value} reported traffic"
            )
    return cmp


def _cell(v: Optional[int]) -> str:
    return "" if v is None else str(v)


def intervals_csv(rows: list[IntervalResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INTERVAL_COLUMNS)
    for r in rows:
        w.writerow((r.interval_id, r.color, _cell(r.tx_count), _cell(r.rx_count),
                    _cell(r.loss), _cell(r.delay_ns)))
    return buf.getvalue()


def aggregate_rows(rows: list[IntervalResult]) -> list[IntervalResult]:
    """Per-interval totals over all flows; delay is kept only for a single flow."""
    flows = {r.flow_id for r in rows}
    if len(flows) <= 1:
        return sorted(rows, key=lambda r: r.interval_id)
    by_iid: dict[int, list[IntervalResult]] = {}
    for r in rows:
        by_iid.setdefault(r.interval_id, []).append(r)

    def total(vals):
        return None if any(v is None for v in vals) else sum(vals)

    return [
        IntervalResult(
            flow_id=None,
            interval_id=iid,
            color=iid & 1,
            tx_count=total([r.tx_count for r in group]),
            rx_count=total([r.rx_count for r in group]),
            loss=total([r.loss for r in group]),
            delay_ns=None,
        )
        for iid, group in sorted(by_iid.items())
    ]


@dataclass
class RunReport:
    scenario_digest: str
    rows: list[IntervalResult]
    comparison: OracleComparison

    def to_text(self) -> str:
        c = self.comparison
        delays = [r.delay_ns for r in self.rows if r.delay_ns is not None]
        losses = [r.loss for r in self.rows if r.loss is not None]
        lines = [
            f"scenario_digest: {self.scenario_digest}",
            f"flows: {len({r.flow_id for r in self.rows})}",
            f"intervals: {len(self.rows)}",
            f"total_loss: {sum(losses) if losses else ''}",
            f"delay_samples: {len(delays)}",
            f"intervals_checked: {c.intervals_checked}",
            f"loss_mismatches: {c.loss_mismatches}",
            f"tx_mismatches: {c.tx_mismatches}",
            f"delay_mismatches: {c.delay_mismatches}",
            f"max_abs_delay_error_ns: {c.max_abs_delay_error_ns}",
            f"unpaired_records: {c.unpaired_records}",
            f"negative_loss_intervals: {c.negative_loss}",
            f"implausible_delays: {c.implausible_delays}",
            f"pairing_failure: {'yes' if c.pairing_failure else 'no'}",
            f"verdict: {'PASS' if c.passed else 'FAIL'}",
        ]
        for d in c.details[:50]:
            lines.append(f"detail: {d}")
        if len(c.details) > 50:
            lines.append(f"detail: ... {len(c.details) - 50} more")
        return "\n".join(lines) + "\n"


def parse_report_text(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {"detail": []}
    for line in text.splitlines():
        key, _, value = line.partition(": ")
        if key == "detail":
            out["detail"].append(value)
        elif key:
            out[key] = value
    return out
