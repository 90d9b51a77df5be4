"""Pairs export records from the two MPs and computes loss and one-way delay."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from ampm.errors import DataIntegrityError, NotReadyError
from ampm.marking import ExportRecord, Role
from ampm.timebase import NS_PER_S, TimeLike, as_ns


@dataclass(frozen=True)
class IntervalResult:
    flow_id: Any
    interval_id: int
    color: int
    tx_count: Optional[int]
    rx_count: Optional[int]
    loss: Optional[int]
    delay_ns: Optional[int]

    @property
    def flagged(self) -> bool:
        # negative loss only arises from misattributed blocks; report, don't clamp
        return self.loss is not None and self.loss < 0


class Collector:
    """Stores export records keyed by (flow, interval, role).

    Ingestion is expected to be serialized by the caller. Results do not depend
    on the order in which records arrive.
    """

    def __init__(self):
        self._records: dict[tuple[Any, int, Role], ExportRecord] = {}

    def ingest(self, record: ExportRecord) -> bool:
        """Store ``record``; returns False when it duplicates a stored record."""
        key = (record.flow_id, record.interval_id, Role(record.role))
        held = self._records.get(key)
        if held is None:
            self._records[key] = record
            return True
        if (held.packet_count, held.pulse_timestamp, held.color) != (
            record.packet_count, record.pulse_timestamp, record.color
        ):
            raise DataIntegrityError(
                f"conflicting records for flow {record.flow_id!r} interval "
                f"{record.interval_id} ({key[2].value}): {held} vs {record}"
            )
        return False

    def ingest_all(self, records) -> None:
        for r in records:
            self.ingest(r)

    def _pair(self, flow_id: Any, interval_id: int) -> tuple[ExportRecord, ExportRecord]:
        tx = self._records.get((flow_id, interval_id, Role.INITIATOR))
        rx = self._records.get((flow_id, interval_id, Role.TERMINATOR))
        if tx is None or rx is None:
            missing = "initiator" if tx is None else "terminator"
            raise NotReadyError(f"flow {flow_id!r} interval {interval_id}: no {missing} record")
        return tx, rx

    def compute_loss(self, flow_id: Any, interval_id: int) -> Optional[int]:
        tx, rx = self._pair(flow_id, interval_id)
        if tx.packet_count is None or rx.packet_count is None:
            return None
        return tx.packet_count - rx.packet_count

    def compute_delay(self, flow_id: Any, interval_id: int) -> Optional[int]:
        tx, rx = self._pair(flow_id, interval_id)
        if tx.pulse_timestamp is None or rx.pulse_timestamp is None:
            return None
        return rx.pulse_timestamp - tx.pulse_timestamp

    def result(self, flow_id: Any, interval_id: int) -> IntervalResult:
        tx, rx = self._pair(flow_id, interval_id)
        return IntervalResult(
            flow_id=flow_id,
            interval_id=interval_id,
            color=interval_id & 1,
            tx_count=tx.packet_count,
            rx_count=rx.packet_count,
            loss=self.compute_loss(flow_id, interval_id),
            delay_ns=self.compute_delay(flow_id, interval_id),
        )

    def flows(self) -> list:
        return sorted({k[0] for k in self._records}, key=repr)

    def paired_intervals(self, flow_id: Any) -> list[int]:
        ids = {k[1] for k in self._records if k[0] == flow_id}
        return sorted(
            i for i in ids
            if (flow_id, i, Role.INITIATOR) in self._records
            and (flow_id, i, Role.TERMINATOR) in self._records
        )

    def results(self) -> list[IntervalResult]:
        return [self.result(f, i) for f in self.flows() for i in self.paired_intervals(f)]

    def unpaired(self) -> list[ExportRecord]:
        out = []
        for (flow_id, interval_id, role), rec in self._records.items():
            other = Role.TERMINATOR if role is Role.INITIATOR else Role.INITIATOR
            if (flow_id, interval_id, other) not in self._records:
                out.append(rec)
        return sorted(out, key=lambda r: (repr(r.flow_id), r.interval_id, r.role.value))


def collection_schedule(interval_length_s: int, now: TimeLike) -> list[int]:
    """Intervals that may be collected at ``now``: ended at least half an interval ago."""
    L = interval_length_s * NS_PER_S
    t = as_ns(now)
    # interval i is collectible iff (i + 1) * L + L / 2 <= t
    last = (2 * t - 3 * L) // (2 * L)
    return list(range(0, last + 1))
