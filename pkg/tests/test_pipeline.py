import itertools
import random

import pytest

from ampm.errors import InvalidArgumentError, NoMatchError
from ampm.marking import MarkingMode, Mode, Packet, Role, build_rule_table
from ampm.pipeline import (
    Action,
    FlowState,
    MatchKey,
    RuleTable,
    apply_action,
    classify_slot,
    rule,
    table_lookup,
)
from ampm.timebase import NS_PER_S, Timestamp

ALL_TABLES = [
    t
    for mode in Mode
    for role in Role
    for k in (2, 4)
    for t in build_rule_table(MarkingMode(mode, k), role)
]


def test_step_initiator_lookup():
    (table,) = build_rule_table(MarkingMode(Mode.STEP, 0), Role.INITIATOR)
    res = table_lookup(table, MatchKey(time_bits=0))
    assert res.index == 0
    assert res.action == Action(set_mark=0, counter=0)


def test_muxed_initiator_specific_row():
    (table,) = build_rule_table(MarkingMode(Mode.MUXED, 4), Role.INITIATOR)
    res = table_lookup(table, MatchKey(time_bits=0b010, reg=0))
    assert res.index == 0
    assert res.action == Action(set_mark=1, set_reg=1, counter=0, capture_timestamp=True)


def test_muxed_initiator_wildcard_row():
    (table,) = build_rule_table(MarkingMode(Mode.MUXED, 4), Role.INITIATOR)
    res = table_lookup(table, MatchKey(time_bits=0b011, reg=1))
    assert res.index == 2
    assert res.action == Action(set_mark=0, set_reg=0, counter=0)
    # the specific 010/110 rows shadow the wildcard rows
    assert table_lookup(table, MatchKey(time_bits=0b010, reg=1)).index == 1
    assert table_lookup(table, MatchKey(time_bits=0b110, reg=0)).index == 4


def test_no_match_raises_without_default():
    table = RuleTable("partial", (rule(0, Action(counter=0), mark="1"),), keys_mark=True)
    with pytest.raises(NoMatchError):
        table_lookup(table, MatchKey(mark_bit=0))


def test_invalid_rules_rejected():
    with pytest.raises(InvalidArgumentError):
        RuleTable("wide", (rule(0, Action(), time="111"),), time_range=(1, 0))
    with pytest.raises(InvalidArgumentError):
        RuleTable("unkeyed", (rule(0, Action(), reg="1"),))
    with pytest.raises(InvalidArgumentError):
        RuleTable("dup", (rule(0, Action(), mark="0"), rule(0, Action(), mark="1")), keys_mark=True)
    with pytest.raises(InvalidArgumentError):
        Action(set_mark=2)


def test_apply_action_counter_only():
    flow = FlowState(1, counter0=7, counter1=3)
    pkt = Packet(1, 0, mark=1)
    apply_action(Action(counter=0), pkt, flow, None)
    assert (flow.counter0, flow.counter1) == (8, 3)
    assert pkt.mark == 1


def test_apply_action_pulse_row():
    flow = FlowState(1)
    pkt = Packet(1, 0)
    ts = Timestamp(40, 0)
    apply_action(Action(set_mark=1, set_reg=1, counter=0, capture_timestamp=True), pkt, flow, ts)
    assert pkt.mark == 1 and flow.reg == 1 and flow.counter0 == 1
    assert flow.pulse_timestamp == Timestamp(40, 0)


def test_apply_action_preserves_mark():
    flow = FlowState(1)
    pkt = Packet(1, 0, mark=1)
    apply_action(Action(counter=1), pkt, flow, None)
    assert pkt.mark == 1 and flow.counter1 == 1


def test_apply_action_second_mark_field():
    pkt = Packet(1, 0, mark=1, mark2=0)
    apply_action(Action(set_mark=1), pkt, FlowState(1), None, "mark2")
    assert (pkt.mark, pkt.mark2) == (1, 1)


@pytest.mark.parametrize("table", ALL_TABLES, ids=lambda t: f"{t.name}-{t.time_range}")
def test_every_table_is_total(table):
    for key in table.key_space():
        res = table.lookup(key)
        assert res.action is not None
        assert table.fast_lookup(key.time_bits, key.mark_bit, key.reg) == res


@pytest.mark.parametrize(
    "mode,role",
    [(m, r) for m in (Mode.STEP, Mode.DOUBLE, Mode.MUXED) for r in Role],
)
def test_exactly_one_counter_per_packet(mode, role):
    tables = build_rule_table(MarkingMode(mode, 4), role)
    keyspaces = [list(t.key_space()) for t in tables]
    for combo in itertools.product(*keyspaces):
        increments = sum(
            t.lookup(k).action.counter is not None for t, k in zip(tables, combo)
        )
        assert increments == 1


@pytest.mark.parametrize("table", ALL_TABLES, ids=lambda t: f"{t.name}-{t.time_range}")
def test_priority_order_independent_of_storage(table):
    rng = random.Random(table.name)
    for _ in range(5):
        shuffled = list(table.rules)
        rng.shuffle(shuffled)
        other = RuleTable(table.name, tuple(shuffled), table.time_range, table.keys_mark,
                          table.keys_reg, table.mark_field, table.default_action)
        for key in table.key_space():
            assert other.lookup(key) == table.lookup(key)


def test_classify_slot_extracts_time_keys():
    tables = build_rule_table(MarkingMode(Mode.DOUBLE, 4), Role.INITIATOR)
    # 24 s = 0b11000: Seconds[4] = 1, Seconds[4:2] = 0b110
    assert classify_slot(tables, 24 * NS_PER_S + 5) == [1, 0b110]
