"""Marking rule tables and the measurement points that run them.

Four modes are supported:

``step``
    The wire bit carries the interval color (bit ``k`` of the seconds field);
    each color has its own counter.
``pulse``
    One packet per interval, the first one after the time bit toggles, is
    marked and timestamped. The register holds the previous packet's time bit.
``double``
    Two wire bits: the step bit and a separate pulse bit. The pulse is sent in
    the third quarter of the interval so that the pair carries exactly the
    information of the muxed bit.
``muxed``
    One wire bit equal to step XOR pulse. The three seconds bits ``[k:k-2]``
    give the color and the quarter; the bit's meaning depends on the quarter.

A :class:`MeasurementPoint` keeps two counters per flow and snapshots the idle
counter half way through each interval, when the previous interval's color is
no longer in use. ``packet_count`` of an exported interval is the difference
between consecutive snapshots of that color.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional

from ampm.errors import InvalidArgumentError, InvalidConfigurationError, NotFoundError, NotReadyError
from ampm.pipeline import NO_OP, Action, FlowState, RuleTable, apply_action, classify_slot, rule
from ampm.timebase import NS_PER_S, Clock, TimeLike, Timestamp, as_ns


class Mode(str, enum.Enum):
    STEP = "step"
    PULSE = "pulse"
    DOUBLE = "double"
    MUXED = "muxed"


class Role(str, enum.Enum):
    INITIATOR = "initiator"
    TERMINATOR = "terminator"


@dataclass(frozen=True)
class MarkingMode:
    kind: Mode
    interval_bit: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Mode(self.kind))
        if not 0 <= self.interval_bit < 63:
            raise InvalidConfigurationError(f"interval bit {self.interval_bit} out of range")
        if self.kind in (Mode.MUXED, Mode.DOUBLE) and self.interval_bit < 2:
            raise InvalidConfigurationError(f"{self.kind.value} requires k >= 2")

    @property
    def interval_s(self) -> int:
        return 1 << self.interval_bit

    @property
    def interval_ns(self) -> int:
        return self.interval_s * NS_PER_S

    @property
    def slot_lo(self) -> int:
        return self.interval_bit - 2

    @property
    def counts_loss(self) -> bool:
        return self.kind is not Mode.PULSE

    @property
    def measures_delay(self) -> bool:
        return self.kind is not Mode.STEP

    @property
    def uses_mark2(self) -> bool:
        return self.kind is Mode.DOUBLE


def _a(mark=None, reg=None, counter=None, ts=False) -> Action:
    return Action(set_mark=mark, set_reg=reg, counter=counter, capture_timestamp=ts)


def _step_initiator(k: int) -> RuleTable:
    return RuleTable(
        "step-initiator",
        (
            rule(0, _a(mark=0, counter=0), time="0"),
            rule(1, _a(mark=1, counter=1), time="1"),
        ),
        time_range=(k, k),
    )


def _step_terminator() -> RuleTable:
    return RuleTable(
        "step-terminator",
        (
            rule(0, _a(counter=0), mark="0"),
            rule(1, _a(counter=1), mark="1"),
        ),
        keys_mark=True,
    )


def _pulse_initiator(k: int) -> RuleTable:
    return RuleTable(
        "pulse-initiator",
        (
            rule(0, _a(mark=1, reg=1, ts=True), time="1", reg="0"),
            rule(1, _a(mark=0, reg=1), time="1", reg="1"),
            rule(2, _a(mark=1, reg=0, ts=True), time="0", reg="1"),
            rule(3, _a(mark=0, reg=0), time="0", reg="0"),
        ),
        time_range=(k, k),
        keys_reg=True,
    )


def _pulse_terminator(mark_field: str = "mark") -> RuleTable:
    return RuleTable(
        "pulse-terminator",
        (rule(0, _a(ts=True), mark="1"),),
        keys_mark=True,
        mark_field=mark_field,
        default_action=NO_OP,
    )


def _muxed_initiator(k: int) -> RuleTable:
    return RuleTable(
        "muxed-initiator",
        (
            rule(0, _a(mark=1, reg=1, counter=0, ts=True), time="010", reg="0"),
            rule(1, _a(mark=0, reg=1, counter=0), time="010", reg="1"),
            rule(2, _a(mark=0, reg=0, counter=0), time="0**", reg="*"),
            rule(3, _a(mark=0, reg=0, counter=1, ts=True), time="110", reg="1"),
            rule(4, _a(mark=1, reg=0, counter=1), time="110", reg="0"),
            rule(5, _a(mark=1, reg=1, counter=1), time="1**", reg="*"),
        ),
        time_range=(k, k - 2),
        keys_reg=True,
    )


def _muxed_terminator(k: int) -> RuleTable:
    return RuleTable(
        "muxed-terminator",
        (
            rule(0, _a(counter=0, ts=True), time="001", mark="1"),
            rule(1, _a(counter=0, ts=True), time="010", mark="1"),
            rule(2, _a(counter=1, ts=True), time="101", mark="0"),
            rule(3, _a(counter=1, ts=True), time="110", mark="0"),
            rule(4, _a(counter=0), time="***", mark="0"),
            rule(5, _a(counter=1), time="***", mark="1"),
        ),
        time_range=(k, k - 2),
        keys_mark=True,
    )


def _double_pulse_initiator(k: int) -> RuleTable:
    # Pulse component of the muxed initiator table: identical match and
    # register columns, second wire bit = muxed bit XOR step bit.
    return RuleTable(
        "double-pulse-initiator",
        (
            rule(0, _a(mark=1, reg=1, ts=True), time="010", reg="0"),
            rule(1, _a(mark=0, reg=1), time="010", reg="1"),
            rule(2, _a(mark=0, reg=0), time="0**", reg="*"),
            rule(3, _a(mark=1, reg=0, ts=True), time="110", reg="1"),
            rule(4, _a(mark=0, reg=0), time="110", reg="0"),
            rule(5, _a(mark=0, reg=1), time="1**", reg="*"),
        ),
        time_range=(k, k - 2),
        keys_reg=True,
        mark_field="mark2",
    )


def build_rule_table(mode: MarkingMode, role: Role | str) -> tuple[RuleTable, ...]:
    """The tables an MP of ``role`` applies, in pipeline order."""
    role = Role(role)
    k = mode.interval_bit
    initiator = role is Role.INITIATOR
    if mode.kind is Mode.STEP:
        return (_step_initiator(k),) if initiator else (_step_terminator(),)
    if mode.kind is Mode.PULSE:
        return (_pulse_initiator(k),) if initiator else (_pulse_terminator(),)
    if mode.kind is Mode.MUXED:
        return (_muxed_initiator(k),) if initiator else (_muxed_terminator(k),)
    if initiator:
        return (_step_initiator(k), _double_pulse_initiator(k))
    return (_step_terminator(), _pulse_terminator("mark2"))


def armed_register(mode: MarkingMode, local_ns: int) -> int:
    """Register value that lets the next pulse-window packet fire a pulse.

    Applied when a flow's first packet of a new interval arrives, so a traffic
    gap cannot leave the register in the "already pulsed" state.
    """
    seconds = local_ns // NS_PER_S
    bit = (seconds >> mode.interval_bit) & 1
    if mode.kind is Mode.PULSE:
        return bit ^ 1
    # muxed/double: color 0 arms with Reg=0, color 1 with Reg=1
    return bit


class PulseState(enum.Enum):
    FIRST = "first"
    NOT_FIRST = "not_first"


def pulse_state_step(prev_time_bit: int, time_bit: int) -> PulseState:
    return PulseState.FIRST if time_bit != prev_time_bit else PulseState.NOT_FIRST


@dataclass
class Packet:
    flow_id: Any
    seq: int
    mark: int = 0
    mark2: Optional[int] = None


@dataclass(frozen=True)
class ExportRecord:
    node_id: str
    role: Role
    flow_id: Any
    interval_id: int
    color: int
    packet_count: Optional[int]  # None in pulse mode, which keeps no counters
    pulse_timestamp: Optional[Timestamp]


class ProcessOutcome(NamedTuple):
    packet: Packet
    local_ns: int
    interval_id: int
    counter: Optional[int]
    captured: bool


@dataclass
class _IntervalBook:
    next_snap: int
    last_interval: Optional[int] = None
    snapshots: dict = field(default_factory=dict)
    pulses: dict = field(default_factory=dict)
    extra_pulses: int = 0
    packets: int = 0


class MeasurementPoint:
    """One end of the measured path.

    The MP is event driven: it only learns the time from the packets it
    processes and from explicit :meth:`start`/:meth:`flush` calls. Interval
    snapshots are brought up to date lazily per flow, which is exact because a
    flow's counters only change when one of its packets is processed.
    """

    def __init__(self, node_id: str, role: Role | str, mode: MarkingMode,
                 clock: Optional[Clock] = None, *, rearm: bool = True):
        self.node_id = node_id
        self.role = Role(role)
        self.mode = mode
        self.clock = clock or Clock(node_id)
        self.tables = build_rule_table(mode, self.role)
        self.rearm = rearm and self.role is Role.INITIATOR and mode.kind is not Mode.STEP
        self.flows: dict[Any, FlowState] = {}
        self._books: dict[Any, _IntervalBook] = {}
        self._interval_ns = mode.interval_ns
        self.origin: Optional[int] = None
        self.now_ns: Optional[int] = None

    def start(self, true_time: TimeLike) -> None:
        local = self.clock.now_ns(as_ns(true_time))
        if self.origin is not None:
            raise InvalidArgumentError(f"{self.node_id} already started")
        self.origin = local // self._interval_ns
        self.now_ns = local

    def install_flow(self, flow_id: Any) -> FlowState:
        if self.origin is None:
            raise NotReadyError(f"{self.node_id} has not been started")
        if flow_id not in self.flows:
            self.flows[flow_id] = FlowState(flow_id)
            self._books[flow_id] = _IntervalBook(next_snap=self.origin)
        return self.flows[flow_id]

    def _tick(self, local: int) -> None:
        if self.origin is None:
            self.origin = local // self._interval_ns
            self.now_ns = local
        elif local < self.now_ns:
            raise InvalidArgumentError(
                f"{self.node_id}: time went backwards ({local} < {self.now_ns} ns)"
            )
        else:
            self.now_ns = local

    def completed_through(self, local_ns: Optional[int] = None) -> int:
        """Last interval whose counters are stable, i.e. half an interval past its end."""
        t = self.now_ns if local_ns is None else local_ns
        L = self._interval_ns
        return (t - L - L // 2) // L

    def _advance(self, flow: FlowState, book: _IntervalBook, local_ns: int) -> None:
        upto = self.completed_through(local_ns)
        if upto < book.next_snap:
            return
        for i in range(book.next_snap, upto + 1):
            book.snapshots[i] = flow.counter(i & 1)
        book.next_snap = upto + 1

    def process(self, pkt: Packet, true_time: TimeLike) -> ProcessOutcome:
        local_ns = self.clock.now_ns(as_ns(true_time))
        self._tick(local_ns)
        flow = self.flows.get(pkt.flow_id) or self.install_flow(pkt.flow_id)
        book = self._books[pkt.flow_id]
        self._advance(flow, book, local_ns)

        interval_id = local_ns // self._interval_ns
        if book.last_interval != interval_id:
            book.last_interval = interval_id
            flow.pulse_timestamp = None
            if self.rearm:
                flow.reg = armed_register(self.mode, local_ns)

        counter = None
        captured = False
        for table, time_bits in zip(self.tables, classify_slot(self.tables, local_ns)):
            mark = getattr(pkt, table.mark_field) if table.keys_mark else None
            reg = flow.reg if table.keys_reg else None
            action = table.fast_lookup(time_bits, mark, reg).action
            local_ts = Timestamp.from_ns(local_ns) if action.capture_timestamp else None
            apply_action(action, pkt, flow, local_ts, table.mark_field)
            if action.counter is not None:
                counter = action.counter
            if action.capture_timestamp:
                captured = True
                if interval_id in book.pulses:
                    book.extra_pulses += 1
                else:
                    book.pulses[interval_id] = local_ts
        book.packets += 1

        if self.role is Role.TERMINATOR:
            pkt.mark = 0
            if pkt.mark2 is not None:
                pkt.mark2 = 0
        return ProcessOutcome(pkt, local_ns, interval_id, counter, captured)

    def flush(self, true_time: TimeLike) -> None:
        """Move the MP clock forward without traffic so trailing intervals complete."""
        local = self.clock.now_ns(as_ns(true_time))
        self._tick(local)
        for flow_id, flow in self.flows.items():
            self._advance(flow, self._books[flow_id], local)

    def export(self, flow_id: Any, interval_id: int) -> ExportRecord:
        if flow_id not in self.flows:
            raise NotFoundError(f"{self.node_id}: unknown flow {flow_id!r}")
        if interval_id < self.origin:
            raise NotFoundError(f"{self.node_id}: interval {interval_id} precedes start")
        if interval_id > self.completed_through():
            raise NotReadyError(f"{self.node_id}: interval {interval_id} still in progress")
        flow = self.flows[flow_id]
        book = self._books[flow_id]
        self._advance(flow, book, self.now_ns)
        count = None
        if self.mode.counts_loss:
            prev = book.snapshots.get(interval_id - 2, 0)
            count = book.snapshots[interval_id] - prev
        return ExportRecord(
            node_id=self.node_id,
            role=self.role,
            flow_id=flow_id,
            interval_id=interval_id,
            color=interval_id & 1,
            packet_count=count,
            pulse_timestamp=book.pulses.get(interval_id),
        )

    def export_all(self) -> list[ExportRecord]:
        if self.origin is None:
            return []
        last = self.completed_through()
        return [
            self.export(flow_id, i)
            for flow_id in sorted(self.flows, key=repr)
            for i in range(self.origin, last + 1)
        ]

    def anomalies(self, flow_id: Any) -> int:
        """Pulse captures beyond the first in an interval."""
        return self._books[flow_id].extra_pulses

    def packets_seen(self, flow_id: Any) -> int:
        return self._books[flow_id].packets


def mp_process(mp: MeasurementPoint, pkt: Packet, true_time: TimeLike) -> ProcessOutcome:
    return mp.process(pkt, true_time)


def mp_export(mp: MeasurementPoint, flow_id: Any, interval_id: int) -> ExportRecord:
    return mp.export(flow_id, interval_id)
