from __future__ import annotations

from dataclasses import dataclass, field

from ampm.collector import Collector
from ampm.marking import MarkingMode, MeasurementPoint, Mode, Packet, Role
from ampm.timebase import NS_PER_S, Clock


@dataclass
class Drive:
    mp1: MeasurementPoint
    mp2: MeasurementPoint
    wire: list = field(default_factory=list)  # (seq, mark, mark2, captured) leaving MP1
    egress: list = field(default_factory=list)  # (seq, mark, mark2) leaving MP2
    outcomes1: list = field(default_factory=list)
    outcomes2: list = field(default_factory=list)
    collector: Collector = None


def drive(mode: Mode, k: int, tx_times, *, dropped=(), delay_ns=1000, offset2_ns=0,
          rearm=True, flow_id=1, flush_gap_intervals=3) -> Drive:
    """Push packets straight through MP1 and MP2 with a constant-delay link."""
    mm = MarkingMode(mode, k)
    mp1 = MeasurementPoint("mp1", Role.INITIATOR, mm, Clock("mp1"), rearm=rearm)
    mp2 = MeasurementPoint("mp2", Role.TERMINATOR, mm, Clock("mp2", offset2_ns))
    tx_times = sorted(tx_times)
    start = tx_times[0] if tx_times else 0
    mp1.start(start)
    mp2.start(start)
    mp1.install_flow(flow_id)
    mp2.install_flow(flow_id)
    d = Drive(mp1, mp2)
    dropped = set(dropped)
    in_flight = []
    for seq, t in enumerate(tx_times):
        pkt = Packet(flow_id, seq, 0, 0 if mm.uses_mark2 else None)
        out = mp1.process(pkt, t)
        d.outcomes1.append(out)
        d.wire.append((seq, pkt.mark, pkt.mark2, out.captured))
        if seq not in dropped:
            in_flight.append((t + delay_ns, Packet(flow_id, seq, pkt.mark, pkt.mark2)))
    for t, pkt in in_flight:
        out = mp2.process(pkt, t)
        d.outcomes2.append(out)
        d.egress.append((pkt.seq, pkt.mark, pkt.mark2))
    end = (tx_times[-1] if tx_times else start) + delay_ns + flush_gap_intervals * mm.interval_ns
    mp1.flush(end)
    mp2.flush(end)
    c = Collector()
    c.ingest_all(mp1.export_all())
    c.ingest_all(mp2.export_all())
    d.collector = c
    return d


def s(seconds: float) -> int:
    return round(seconds * NS_PER_S)
