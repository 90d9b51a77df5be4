"""Timestamps, per-node clocks and the bit-level time matching primitives.

A periodic match rule is a ternary match on the seconds field of the packet
timestamp with every bit masked except the ones of interest. Bit ``k`` of the
seconds field toggles every ``2**k`` seconds, so a rule on that bit alone is
active for alternating ``2**k`` second periods.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ampm.errors import ClockUnderflowError, InvalidArgumentError

NS_PER_S = 1_000_000_000
SECONDS_WIDTH = 64


@dataclass(frozen=True, order=True)
class Timestamp:
    """Seconds plus a nanosecond fraction, ordered lexicographically."""

    seconds: int
    fraction_ns: int = 0

    def __post_init__(self):
        if self.seconds < 0:
            raise InvalidArgumentError(f"seconds must be non-negative, got {self.seconds}")
        if not 0 <= self.fraction_ns < NS_PER_S:
            raise InvalidArgumentError(f"fraction_ns out of range: {self.fraction_ns}")

    @classmethod
    def from_ns(cls, ns: int) -> Timestamp:
        if ns < 0:
            raise ClockUnderflowError(f"timestamp before epoch: {ns} ns")
        return cls(*divmod(ns, NS_PER_S))

    @property
    def ns(self) -> int:
        return self.seconds * NS_PER_S + self.fraction_ns

    def __sub__(self, other: Timestamp) -> int:
        """Difference in nanoseconds."""
        if not isinstance(other, Timestamp):
            return NotImplemented
        return self.ns - other.ns

    def __str__(self):
        return f"{self.seconds}.{self.fraction_ns:09d}"


TimeLike = Union[Timestamp, int]


def as_ns(t: TimeLike) -> int:
    return t.ns if isinstance(t, Timestamp) else int(t)


def time_bit(ts: Timestamp, k: int) -> int:
    """Bit ``k`` of the seconds field."""
    if not 0 <= k < SECONDS_WIDTH:
        raise InvalidArgumentError(f"bit index {k} outside the seconds field")
    return (ts.seconds >> k) & 1


def time_slot(ts: Timestamp, hi: int, lo: int) -> int:
    """Bits ``[hi:lo]`` of the seconds field as an unsigned integer.

    With ``hi=4, lo=2`` the top bit of the result is the interval color and the
    low two bits are the quarter within a 16 s interval.
    """
    if lo < 0 or hi < lo:
        raise InvalidArgumentError(f"invalid bit range [{hi}:{lo}]")
    if hi >= SECONDS_WIDTH:
        raise InvalidArgumentError(f"bit index {hi} outside the seconds field")
    return (ts.seconds >> lo) & ((1 << (hi - lo + 1)) - 1)


def ternary_match(value: int, pattern: int, mask: int) -> bool:
    return (value & mask) == (pattern & mask)


@dataclass(frozen=True)
class Clock:
    """A node clock running at the true rate with a fixed phase offset."""

    node_id: str
    offset_ns: int = 0

    def now_ns(self, true_ns: int) -> int:
        local = true_ns + self.offset_ns
        if local < 0:
            raise ClockUnderflowError(
                f"clock {self.node_id!r} reads {local} ns (before epoch) at true time {true_ns} ns"
            )
        return local

    def now(self, true_time: TimeLike) -> Timestamp:
        return Timestamp.from_ns(self.now_ns(as_ns(true_time)))


def clock_now(clock: Clock, true_time: TimeLike) -> Timestamp:
    return clock.now(true_time)
