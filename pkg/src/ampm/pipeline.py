"""Prioritized ternary match-action tables with per-flow registers and counters.

A table matches on up to three fields: a range of timestamp seconds bits, a
packet marking bit and a one-bit per-flow register. Each field of a rule is a
``(pattern, mask)`` pair; a zero mask is a wildcard. The first rule in priority
order whose three fields all match wins. A table may carry a default action
that applies on a miss, as P4 tables do.

Processing is split in two lookups. :func:`classify_slot` extracts the time
bits once per packet (a handful of global rules); the per-flow stage then looks
up the flow's table with the flow's own register.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterator, NamedTuple, Optional

from ampm.errors import InvalidArgumentError, NoMatchError
from ampm.timebase import NS_PER_S, Timestamp


@dataclass(frozen=True)
class Action:
    """What a matched rule does. ``None`` leaves the field unchanged."""

    set_mark: Optional[int] = None
    set_reg: Optional[int] = None
    counter: Optional[int] = None
    capture_timestamp: bool = False

    def __post_init__(self):
        for name in ("set_mark", "set_reg", "counter"):
            v = getattr(self, name)
            if v not in (None, 0, 1):
                raise InvalidArgumentError(f"{name} must be 0, 1 or None, got {v!r}")

    def describe(self, mark_name: str = "MarkBit") -> str:
        parts = []
        if self.set_mark is not None:
            parts.append(f"{mark_name}={self.set_mark}")
        if self.set_reg is not None:
            parts.append(f"Reg={self.set_reg}")
        if self.counter is not None:
            parts.append(f"counter{self.counter}")
        if self.capture_timestamp:
            parts.append("timestamp")
        return ", ".join(parts) or "no-op"


NO_OP = Action()


@dataclass(frozen=True)
class MatchKey:
    time_bits: Optional[int] = None
    mark_bit: Optional[int] = None
    reg: Optional[int] = None


@dataclass(frozen=True)
class TernaryRule:
    priority: int
    action: Action
    time_pattern: int = 0
    time_mask: int = 0
    mark_pattern: int = 0
    mark_mask: int = 0
    reg_pattern: int = 0
    reg_mask: int = 0

    def matches(self, key: MatchKey) -> bool:
        return (
            ((key.time_bits or 0) & self.time_mask) == (self.time_pattern & self.time_mask)
            and ((key.mark_bit or 0) & self.mark_mask) == (self.mark_pattern & self.mark_mask)
            and ((key.reg or 0) & self.reg_mask) == (self.reg_pattern & self.reg_mask)
        )


def rule(priority: int, action: Action, *, time: Optional[str] = None,
         mark: Optional[str] = None, reg: Optional[str] = None) -> TernaryRule:
    """Build a rule from the tables' printed notation, e.g. ``time="0**"``.

    Each pattern string is read most significant bit first and ``*`` marks a
    masked bit. Omitted fields are fully masked.
    """
    tp, tm = _parse_ternary(time)
    mp, mm = _parse_ternary(mark)
    rp, rm = _parse_ternary(reg)
    return TernaryRule(priority, action, tp, tm, mp, mm, rp, rm)


def _parse_ternary(text: Optional[str]) -> tuple[int, int]:
    if text is None:
        return 0, 0
    pattern = mask = 0
    for ch in text:
        pattern <<= 1
        mask <<= 1
        if ch == "*":
            continue
        if ch not in "01":
            raise InvalidArgumentError(f"bad ternary pattern {text!r}")
        pattern |= int(ch)
        mask |= 1
    return pattern, mask


def _format_ternary(pattern: int, mask: int, width: int) -> str:
    out = []
    for i in reversed(range(width)):
        out.append("*" if not (mask >> i) & 1 else str((pattern >> i) & 1))
    return "".join(out)


class LookupResult(NamedTuple):
    index: Optional[int]  # None when the default action applied
    action: Action


@dataclass(frozen=True)
class RuleTable:
    """An immutable ternary table.

    Args:
        name: label used when printing the table.
        rules: rules in any order; they are kept sorted by priority.
        time_range: ``(hi, lo)`` seconds bits forming the time key, or None.
        keys_mark: whether the packet marking bit is part of the key.
        keys_reg: whether the per-flow register is part of the key.
        mark_field: packet attribute that is both matched and written.
        default_action: applied on a miss; None makes a miss an error.
    """

    name: str
    rules: tuple[TernaryRule, ...]
    time_range: Optional[tuple[int, int]] = None
    keys_mark: bool = False
    keys_reg: bool = False
    mark_field: str = "mark"
    default_action: Optional[Action] = None
    _compiled: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ordered = tuple(sorted(self.rules, key=lambda r: r.priority))
        prios = [r.priority for r in ordered]
        if len(set(prios)) != len(prios):
            raise InvalidArgumentError(f"{self.name}: duplicate rule priorities")
        if self.time_range is not None:
            hi, lo = self.time_range
            if lo < 0 or hi < lo:
                raise InvalidArgumentError(f"{self.name}: invalid time range {self.time_range}")
        tw = self.time_width
        for r in ordered:
            if r.time_mask >> tw or r.time_pattern >> tw:
                raise InvalidArgumentError(f"{self.name}: rule {r.priority} exceeds the time key width")
            if r.mark_mask >> self.mark_width or r.mark_pattern >> 1:
                raise InvalidArgumentError(f"{self.name}: rule {r.priority} matches on an unkeyed mark bit")
            if r.reg_mask >> self.reg_width or r.reg_pattern >> 1:
                raise InvalidArgumentError(f"{self.name}: rule {r.priority} matches on an unkeyed register")
        object.__setattr__(self, "rules", ordered)
        compiled = {}
        for key in self.key_space():
            try:
                compiled[(key.time_bits, key.mark_bit, key.reg)] = self.lookup(key)
            except NoMatchError:
                pass
        object.__setattr__(self, "_compiled", compiled)

    @property
    def time_width(self) -> int:
        if self.time_range is None:
            return 0
        hi, lo = self.time_range
        return hi - lo + 1

    @property
    def mark_width(self) -> int:
        return 1 if self.keys_mark else 0

    @property
    def reg_width(self) -> int:
        return 1 if self.keys_reg else 0

    def key_space(self) -> Iterator[MatchKey]:
        """Every key of this table's schema."""
        times = range(1 << self.time_width) if self.time_range else [None]
        marks = (0, 1) if self.keys_mark else (None,)
        regs = (0, 1) if self.keys_reg else (None,)
        for t, m, r in itertools.product(times, marks, regs):
            yield MatchKey(t, m, r)

    def lookup(self, key: MatchKey) -> LookupResult:
        for i, r in enumerate(self.rules):
            if r.matches(key):
                return LookupResult(i, r.action)
        if self.default_action is not None:
            return LookupResult(None, self.default_action)
        raise NoMatchError(f"{self.name}: no rule matches {key}")

    def fast_lookup(self, time_bits: Optional[int], mark: Optional[int],
                    reg: Optional[int]) -> LookupResult:
        """Exact-match cache over the (small) key space, same result as lookup."""
        try:
            return self._compiled[(time_bits, mark, reg)]
        except KeyError:
            return self.lookup(MatchKey(time_bits, mark, reg))

    def time_bits_of(self, local_ns: int) -> Optional[int]:
        if self.time_range is None:
            return None
        hi, lo = self.time_range
        return ((local_ns // NS_PER_S) >> lo) & ((1 << (hi - lo + 1)) - 1)

    def format_rows(self) -> list[tuple[str, str]]:
        """(match, action) strings in the tables' printed notation."""
        mark_name = "MarkBit" if self.mark_field == "mark" else "MarkBit2"
        rows = []
        for r in self.rules:
            match = []
            if self.time_range is not None:
                label = "TimeBit" if self.time_width == 1 else "TimeBits"
                match.append(f"{label} = {_format_ternary(r.time_pattern, r.time_mask, self.time_width)}")
            if self.keys_mark:
                match.append(f"{mark_name}={_format_ternary(r.mark_pattern, r.mark_mask, 1)}")
            if self.keys_reg:
                match.append(f"Reg={_format_ternary(r.reg_pattern, r.reg_mask, 1)}")
            rows.append((", ".join(match), r.action.describe(mark_name)))
        if self.default_action is not None:
            rows.append(("(default)", self.default_action.describe(mark_name)))
        return rows


def table_lookup(table: RuleTable, key: MatchKey) -> LookupResult:
    return table.lookup(key)


def classify_slot(tables: tuple[RuleTable, ...], local_ns: int) -> list[Optional[int]]:
    """First lookup stage: the time key of every table, computed once per packet."""
    return [t.time_bits_of(local_ns) for t in tables]


@dataclass
class FlowState:
    flow_id: Any
    reg: int = 0
    counter0: int = 0
    counter1: int = 0
    pulse_timestamp: Optional[Timestamp] = None

    def counter(self, color: int) -> int:
        return self.counter1 if color else self.counter0


def apply_action(action: Action, packet: Any, flow_state: FlowState,
                 local_time: Timestamp, mark_field: str = "mark") -> tuple[Any, FlowState]:
    """Apply ``action`` in place and return ``(packet, flow_state)``."""
    if action.set_mark is not None:
        setattr(packet, mark_field, action.set_mark)
    if action.set_reg is not None:
        flow_state.reg = action.set_reg
    if action.counter == 0:
        flow_state.counter0 += 1
    elif action.counter == 1:
        flow_state.counter1 += 1
    if action.capture_timestamp:
        flow_state.pulse_timestamp = local_time
    return packet, flow_state
