"""Deterministic discrete-event simulation of MP1 -> link -> MP2.

All times are integer nanoseconds of virtual (true) time. Each random stream
is a :class:`random.Random` seeded from the scenario seed plus a stream name,
so adding a flow does not perturb the link's draws. The link draws the drop
verdict first and the jitter second, for every packet, whether or not the
packet is dropped.
"""

from __future__ import annotations

import csv
import heapq
import io
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

from ampm.errors import AmpmError, InvalidConfigurationError
from ampm.marking import ExportRecord, MarkingMode, MeasurementPoint, Mode, Packet, Role
from ampm.timebase import NS_PER_S, Clock

MP1 = "mp1"
MP2 = "mp2"


@dataclass(frozen=True)
class FlowConfig:
    flow_id: int
    rate: float  # packets per second
    duration: float  # seconds
    start: float = 0.0
    spacing: str = "constant"  # or "uniform": gaps drawn from U(0, 2/rate)

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidConfigurationError(f"flow {self.flow_id}: rate must be > 0")
        if self.duration < 0 or self.start < 0:
            raise InvalidConfigurationError(f"flow {self.flow_id}: start/duration must be >= 0")
        if self.spacing not in ("constant", "uniform"):
            raise InvalidConfigurationError(f"flow {self.flow_id}: unknown spacing {self.spacing!r}")

    @property
    def start_ns(self) -> int:
        return round(self.start * NS_PER_S)

    @property
    def end_ns(self) -> int:
        return round((self.start + self.duration) * NS_PER_S)


@dataclass(frozen=True)
class JitterModel:
    kind: str = "none"  # none | uniform (0..max) | symmetric (-max..+max)
    max_ns: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "symmetric"):
            raise InvalidConfigurationError(f"unknown jitter model {self.kind!r}")
        if self.max_ns < 0:
            raise InvalidConfigurationError("jitter max_ns must be >= 0")


@dataclass(frozen=True)
class DropModel:
    kind: str = "none"  # none | bernoulli | burst
    p: float = 0.0
    period: int = 0
    burst_len: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "bernoulli", "burst"):
            raise InvalidConfigurationError(f"unknown drop model {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidConfigurationError(f"drop probability {self.p} outside [0, 1]")
        if self.kind == "burst" and not (self.period > 0 and 0 <= self.burst_len <= self.period):
            raise InvalidConfigurationError("burst drop needs period > 0 and 0 <= burst_len <= period")


@dataclass(frozen=True)
class LinkConfig:
    base_delay_ns: int = 0
    jitter: JitterModel = JitterModel()
    drop: DropModel = DropModel()

    def __post_init__(self):
        if self.base_delay_ns < 0:
            raise InvalidConfigurationError("base_delay_ns must be >= 0")
        if self.jitter.kind == "symmetric" and self.jitter.max_ns > self.base_delay_ns:
            raise InvalidConfigurationError("symmetric jitter larger than the base delay")


@dataclass(frozen=True)
class Scenario:
    mode: MarkingMode
    flows: tuple[FlowConfig, ...]
    link: LinkConfig = LinkConfig()
    offsets_ns: dict = field(default_factory=lambda: {MP1: 0, MP2: 0})
    seed: int = 0
    loss_tolerance: int = 0
    delay_tolerance_ns: int = 0

    def __post_init__(self):
        if not self.flows:
            raise InvalidConfigurationError("scenario needs at least one flow")
        ids = [f.flow_id for f in self.flows]
        if len(set(ids)) != len(ids):
            raise InvalidConfigurationError("duplicate flow ids")
        unknown = set(self.offsets_ns) - {MP1, MP2}
        if unknown:
            raise InvalidConfigurationError(f"unknown clock nodes {sorted(unknown)}")

    def offset(self, node: str) -> int:
        return self.offsets_ns.get(node, 0)


@dataclass
class TraceRecord:
    seq: int
    flow_id: int
    tx_ns: int
    mark: int
    mark2: Optional[int]
    pulse: bool  # the initiator captured a timestamp for this packet
    rx_ns: Optional[int] = None

    @property
    def delivered(self) -> bool:
        return self.rx_ns is not None

    @property
    def verdict(self) -> str:
        return "delivered" if self.delivered else "dropped"


CSV_COLUMNS = ("seq", "flow_id", "tx_ns", "verdict", "rx_ns", "mark")


@dataclass
class TraceLog:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def delivered(self) -> list[TraceRecord]:
        return [r for r in self.records if r.delivered]

    def dropped(self) -> list[TraceRecord]:
        return [r for r in self.records if not r.delivered]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow((r.seq, r.flow_id, r.tx_ns, r.verdict, "" if r.rx_ns is None else r.rx_ns, r.mark))
        return buf.getvalue()


@dataclass
class SimResult:
    scenario: Scenario
    trace: TraceLog
    initiator_records: list[ExportRecord]
    terminator_records: list[ExportRecord]
    mp1: MeasurementPoint
    mp2: MeasurementPoint
    egress: list = field(default_factory=list)  # (seq, mark, mark2) leaving MP2


def stream(seed: int, name: str) -> random.Random:
    return random.Random(f"{seed}/{name}")


def gen_traffic(flow: FlowConfig, rng: Optional[random.Random] = None) -> list[tuple[Packet, int]]:
    """Arrival sequence of one flow as ``(packet, tx_ns)`` pairs.

    Packets get per-flow sequence numbers 0, 1, 2, ...; :func:`run` renumbers
    them globally after merging flows.
    """
    out = []
    start, end = flow.start_ns, flow.end_ns
    if flow.spacing == "constant":
        rate = Fraction(str(flow.rate))
        num, den = rate.numerator, rate.denominator * NS_PER_S
        i = 0
        while True:
            t = start + (i * den) // num
            if t >= end:
                break
            out.append((Packet(flow.flow_id, i), t))
            i += 1
    else:
        if rng is None:
            raise InvalidConfigurationError("uniform spacing needs a random stream")
        mean_gap = NS_PER_S / flow.rate
        t = start
        i = 0
        while t < end:
            out.append((Packet(flow.flow_id, i), t))
            t += max(1, round(rng.uniform(0.0, 2.0 * mean_gap)))
            i += 1
    return out


def link_transit(pkt: Packet, tx_ns: int, link: LinkConfig, rng: random.Random) -> Optional[int]:
    """Receive time in ns, or None when the packet is dropped."""
    drop = link.drop
    dropped = False
    if drop.kind == "bernoulli":
        dropped = rng.random() < drop.p
    elif drop.kind == "burst":
        dropped = pkt.seq % drop.period < drop.burst_len
    jitter = 0
    if link.jitter.kind == "uniform":
        jitter = rng.randint(0, link.jitter.max_ns)
    elif link.jitter.kind == "symmetric":
        jitter = rng.randint(-link.jitter.max_ns, link.jitter.max_ns)
    if dropped:
        return None
    return tx_ns + link.base_delay_ns + jitter


_TX, _RX = 0, 1


def run(scenario: Scenario) -> SimResult:
    mode = scenario.mode
    mp1 = MeasurementPoint(MP1, Role.INITIATOR, mode, Clock(MP1, scenario.offset(MP1)))
    mp2 = MeasurementPoint(MP2, Role.TERMINATOR, mode, Clock(MP2, scenario.offset(MP2)))

    arrivals = []
    for flow in scenario.flows:
        rng = stream(scenario.seed, f"traffic/{flow.flow_id}")
        arrivals.extend(gen_traffic(flow, rng))
    arrivals.sort(key=lambda a: (a[1], a[0].flow_id, a[0].seq))
    for seq, (pkt, _) in enumerate(arrivals):
        pkt.seq = seq
        if mode.uses_mark2:
            pkt.mark2 = 0

    t0 = min(f.start_ns for f in scenario.flows)
    try:
        mp1.start(t0)
        mp2.start(t0)
        for flow in scenario.flows:
            mp1.install_flow(flow.flow_id)
            mp2.install_flow(flow.flow_id)
    except AmpmError as exc:
        raise InvalidConfigurationError(f"cannot start measurement points: {exc}") from exc

    link_rng = stream(scenario.seed, "link")
    trace = TraceLog()
    egress = []
    events = [(t, _TX, pkt.seq, pkt) for pkt, t in arrivals]
    heapq.heapify(events)
    last = t0
    while events:
        t, kind, seq, pkt = heapq.heappop(events)
        last = t
        if kind == _TX:
            out = mp1.process(pkt, t)
            rec = TraceRecord(seq, pkt.flow_id, t, pkt.mark, pkt.mark2, out.captured)
            trace.records.append(rec)
            rx = link_transit(pkt, t, scenario.link, link_rng)
            if rx is not None:
                rec.rx_ns = rx
                heapq.heappush(events, (rx, _RX, seq, Packet(pkt.flow_id, seq, pkt.mark, pkt.mark2)))
        else:
            mp2.process(pkt, t)
            egress.append((seq, pkt.mark, pkt.mark2))

    end = max([last] + [f.end_ns for f in scenario.flows])
    flush_at = end + 2 * mode.interval_ns
    mp1.flush(flush_at)
    mp2.flush(flush_at)
    return SimResult(
        scenario=scenario,
        trace=trace,
        initiator_records=mp1.export_all(),
        terminator_records=mp2.export_all(),
        mp1=mp1,
        mp2=mp2,
        egress=egress,
    )


# --- ground truth derived from the trace alone ------------------------------

def _init_interval(rec: TraceRecord, scenario: Scenario) -> int:
    return (rec.tx_ns + scenario.offset(MP1)) // scenario.mode.interval_ns


def oracle_counts(trace: TraceLog, scenario: Scenario) -> dict[tuple[Any, int], tuple[int, int]]:
    """``(sent, dropped)`` per (flow, initiator-local interval)."""
    out: dict = {}
    for r in trace.records:
        key = (r.flow_id, _init_interval(r, scenario))
        sent, dropped = out.get(key, (0, 0))
        out[key] = (sent + 1, dropped + (0 if r.delivered else 1))
    return out


def oracle_pulse_packets(trace: TraceLog, scenario: Scenario) -> dict[tuple[Any, int], TraceRecord]:
    """The packet that should carry each interval's pulse, chosen by time alone.

    Pulse mode: the flow's first packet in the interval. Muxed/double: the
    flow's first packet in the third quarter of the interval.
    """
    mode = scenario.mode
    if mode.kind is Mode.STEP:
        return {}
    L = mode.interval_ns
    out: dict = {}
    for r in sorted(trace.records, key=lambda r: r.tx_ns):
        local = r.tx_ns + scenario.offset(MP1)
        if mode.kind is not Mode.PULSE and (local % L) * 4 // L != 2:
            continue
        out.setdefault((r.flow_id, local // L), r)
    return out


def oracle_delays(trace: TraceLog, scenario: Scenario) -> dict[tuple[Any, int], int]:
    """Expected measured delay: true transit of the pulse plus the clock offset between MPs."""
    skew = scenario.offset(MP2) - scenario.offset(MP1)
    return {
        key: rec.rx_ns - rec.tx_ns + skew
        for key, rec in oracle_pulse_packets(trace, scenario).items()
        if rec.delivered
    }
