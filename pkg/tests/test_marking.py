import pytest
from conftest import drive, s
from hypothesis import given, settings
from hypothesis import strategies as st
from printed_tables import PRINTED, expected_action

from ampm.errors import InvalidConfigurationError, NotFoundError, NotReadyError
from ampm.marking import (
    MarkingMode,
    MeasurementPoint,
    Mode,
    Packet,
    PulseState,
    Role,
    build_rule_table,
    pulse_state_step,
)
from ampm.pipeline import Action
from ampm.timebase import NS_PER_S, Clock, Timestamp


# --- tables ----------------------------------------------------------------

def test_step_initiator_has_two_rules():
    (t,) = build_rule_table(MarkingMode(Mode.STEP, 0), Role.INITIATOR)
    assert [r.action for r in t.rules] == [Action(set_mark=0, counter=0), Action(set_mark=1, counter=1)]


def test_pulse_initiator_first_packet_row():
    (t,) = build_rule_table(MarkingMode(Mode.PULSE, 0), Role.INITIATOR)
    assert len(t.rules) == 4
    from ampm.pipeline import MatchKey

    assert t.lookup(MatchKey(time_bits=1, reg=0)).action == Action(set_mark=1, set_reg=1, capture_timestamp=True)


def test_muxed_terminator_rows():
    (t,) = build_rule_table(MarkingMode(Mode.MUXED, 4), Role.TERMINATOR)
    assert t.format_rows() == PRINTED[("muxed", "terminator")]


def test_double_returns_two_tables():
    init = build_rule_table(MarkingMode(Mode.DOUBLE, 4), Role.INITIATOR)
    term = build_rule_table(MarkingMode(Mode.DOUBLE, 4), Role.TERMINATOR)
    assert [t.mark_field for t in init] == ["mark", "mark2"]
    assert [t.mark_field for t in term] == ["mark", "mark2"]
    assert init[0].format_rows() == PRINTED[("step", "initiator")]
    assert term[0].format_rows() == PRINTED[("step", "terminator")]


@pytest.mark.parametrize("mode", [Mode.MUXED, Mode.DOUBLE])
@pytest.mark.parametrize("k", [0, 1])
def test_slot_modes_need_two_sub_bits(mode, k):
    with pytest.raises(InvalidConfigurationError):
        MarkingMode(mode, k)


@pytest.mark.parametrize("key", sorted(PRINTED))
def test_tables_brute_force_against_printed(key):
    mode, role = key
    k = 4
    (table,) = build_rule_table(MarkingMode(Mode(mode), k), Role(role))
    rows = PRINTED[key]
    for mk in table.key_space():
        want = expected_action(rows, mk.time_bits, table.time_width, mk.mark_bit, mk.reg)
        got = table.lookup(mk)
        if want is None:
            assert got.index is None  # default action of the single-row pulse terminator
            assert got.action.describe() == "no-op"
        else:
            assert got.action.describe() == want


def test_double_pulse_bit_is_muxed_xor_step():
    (mux,) = build_rule_table(MarkingMode(Mode.MUXED, 4), Role.INITIATOR)
    step, pulse = build_rule_table(MarkingMode(Mode.DOUBLE, 4), Role.INITIATOR)
    for key in mux.key_space():
        m = mux.lookup(key).action
        st_ = step.fast_lookup(key.time_bits >> 2, None, None).action
        pu = pulse.lookup(key).action
        assert m.set_mark == st_.set_mark ^ pu.set_mark
        assert m.set_reg == pu.set_reg
        assert m.counter == st_.counter
        assert m.capture_timestamp == pu.capture_timestamp


@pytest.mark.parametrize("prev,cur,state", [
    (0, 1, PulseState.FIRST), (1, 1, PulseState.NOT_FIRST), (0, 0, PulseState.NOT_FIRST),
    (1, 0, PulseState.FIRST),
])
def test_pulse_state_step(prev, cur, state):
    assert pulse_state_step(prev, cur) is state


def test_pulse_table_reg_tracks_previous_time_bit():
    (t,) = build_rule_table(MarkingMode(Mode.PULSE, 3), Role.INITIATOR)
    from ampm.pipeline import MatchKey

    for tb in (0, 1):
        for reg in (0, 1):
            a = t.lookup(MatchKey(time_bits=tb, reg=reg)).action
            assert a.set_reg == tb
            first = pulse_state_step(reg, tb) is PulseState.FIRST
            assert a.capture_timestamp == first
            assert a.set_mark == int(first)


# --- measurement point -------------------------------------------------------

def _mp(mode, role, k, offset=0, start=0):
    mp = MeasurementPoint("n", role, MarkingMode(mode, k), Clock("n", offset))
    mp.start(start)
    return mp


def test_step_initiator_example():
    mp = _mp(Mode.STEP, Role.INITIATOR, 0)
    pkt = Packet(1, 0, mark=1)
    out = mp.process(pkt, Timestamp(2))
    assert pkt.mark == 0 and out.counter == 0
    assert mp.flows[1].counter0 == 1


def test_muxed_initiator_pulses_first_packet_of_third_quarter():
    mp = _mp(Mode.MUXED, Role.INITIATOR, 4)
    p1, p2 = Packet(1, 0), Packet(1, 1)
    o1 = mp.process(p1, Timestamp(8))
    o2 = mp.process(p2, Timestamp(8, 1000))
    assert (p1.mark, o1.captured) == (1, True)
    assert (p2.mark, o2.captured) == (0, False)
    assert mp.flows[1].reg == 1


def test_muxed_terminator_color_one_pulse():
    mp = _mp(Mode.MUXED, Role.TERMINATOR, 4)
    pkt = Packet(1, 0, mark=0)
    out = mp.process(pkt, Timestamp(24))
    assert out.counter == 1 and out.captured
    assert mp.flows[1].pulse_timestamp == Timestamp(24)


def test_terminator_clears_marks():
    mp = _mp(Mode.DOUBLE, Role.TERMINATOR, 4)
    pkt = Packet(1, 0, mark=1, mark2=1)
    mp.process(pkt, Timestamp(10))
    assert (pkt.mark, pkt.mark2) == (0, 0)


def test_export_interval_with_pulse():
    # interval 2 = [32 s, 48 s), color 0; 1000 packets 16 ms apart, the 501st at 40 s
    times = [s(32) + i * 16_000_000 for i in range(1000)]
    d = drive(Mode.MUXED, 4, times)
    oracle = sum(1 for t in times if t // (16 * NS_PER_S) == 2)
    rec = d.mp1.export(1, 2)
    assert (rec.interval_id, rec.color, rec.packet_count) == (2, 0, oracle)
    assert oracle == 1000
    assert rec.pulse_timestamp == Timestamp(40, 0)


def test_export_empty_interval():
    d = drive(Mode.MUXED, 4, [s(1), s(2)], flush_gap_intervals=4)
    rec = d.mp1.export(1, 2)
    assert rec.packet_count == 0 and rec.pulse_timestamp is None


def test_export_not_ready_and_not_found():
    mp = _mp(Mode.MUXED, Role.INITIATOR, 4, start=s(16))
    mp.process(Packet(1, 0), s(20))
    with pytest.raises(NotReadyError):
        mp.export(1, 1)  # in progress
    with pytest.raises(NotFoundError):
        mp.export(2, 1)
    mp.flush(s(60))
    with pytest.raises(NotFoundError):
        mp.export(1, 0)  # before the MP started


def test_interval_completes_half_an_interval_after_its_end():
    mp = _mp(Mode.STEP, Role.INITIATOR, 4)
    mp.process(Packet(1, 0), s(1))
    mp.flush(s(24) - 1)
    with pytest.raises(NotReadyError):
        mp.export(1, 0)
    mp.flush(s(24))
    assert mp.export(1, 0).packet_count == 1


def test_export_is_stable():
    d = drive(Mode.STEP, 4, [s(x) for x in (1, 2, 17, 18, 19)], flush_gap_intervals=1)
    first = d.mp1.export(1, 0)
    assert first.packet_count == 2
    # further traffic of the same color (interval 2) does not disturb interval 0
    d.mp1.process(Packet(1, 99), s(40))
    d.mp1.flush(s(80))
    assert d.mp1.export(1, 0) == first
    assert d.mp1.export(1, 2).packet_count == 1


def test_terminator_late_packet_attributed_by_mark():
    # sent at the very end of interval 0, arrives 2 s into interval 1
    d = drive(Mode.MUXED, 4, [s(15.999)], delay_ns=s(2))
    assert d.outcomes2[0].interval_id == 1
    assert d.mp2.export(1, 0).packet_count == 1
    assert d.mp2.export(1, 1).packet_count == 0
    assert d.collector.compute_loss(1, 0) == 0


def test_time_cannot_go_backwards():
    mp = _mp(Mode.STEP, Role.INITIATOR, 4)
    mp.process(Packet(1, 0), s(5))
    with pytest.raises(ValueError):
        mp.process(Packet(1, 1), s(4))


# --- properties over arbitrary arrival sequences -----------------------------

K = 2  # 4 s intervals, 1 s quarters
L = (1 << K) * NS_PER_S

arrivals = st.lists(st.integers(min_value=0, max_value=8 * L), min_size=1, max_size=60, unique=True)


@settings(max_examples=150, deadline=None)
@given(arrivals, st.data())
def test_muxed_equals_double_xor(times, data):
    times = sorted(times)
    dropped = data.draw(st.sets(st.sampled_from(range(len(times)))))
    mux = drive(Mode.MUXED, K, times, dropped=dropped)
    dbl = drive(Mode.DOUBLE, K, times, dropped=dropped)
    for (seq, m, _, cap_m), (_, step_bit, pulse_bit, cap_d) in zip(mux.wire, dbl.wire):
        assert m == step_bit ^ pulse_bit
        assert cap_m == cap_d
    assert mux.collector.results() == dbl.collector.results()


def _third_quarter_windows(times):
    out = {}
    for t in times:
        iid, phase = divmod(t, L)
        if phase * 4 // L == 2:
            out[iid] = True
    return out


@settings(max_examples=150, deadline=None)
@given(arrivals)
def test_one_pulse_per_interval_muxed(times):
    d = drive(Mode.MUXED, K, times)
    windows = _third_quarter_windows(times)
    pulses = {}
    for out in d.outcomes1:
        if out.captured:
            pulses[out.interval_id] = pulses.get(out.interval_id, 0) + 1
    for iid in range(0, 9):
        assert pulses.get(iid, 0) == (1 if windows.get(iid) else 0)


@settings(max_examples=100, deadline=None)
@given(arrivals)
def test_one_pulse_per_interval_pulse_mode(times):
    d = drive(Mode.PULSE, K, times)
    busy = {t // L for t in times}
    pulses = {}
    for out in d.outcomes1:
        if out.captured:
            pulses[out.interval_id] = pulses.get(out.interval_id, 0) + 1
    assert pulses == {iid: 1 for iid in busy}


@settings(max_examples=100, deadline=None)
@given(arrivals, st.data(), st.sampled_from([Mode.STEP, Mode.DOUBLE, Mode.MUXED]))
def test_counter_conservation(times, data, mode):
    dropped = data.draw(st.sets(st.sampled_from(range(len(times)))))
    d = drive(mode, K, times, dropped=dropped)
    f1, f2 = d.mp1.flows[1], d.mp2.flows[1]
    assert f1.counter0 + f1.counter1 == len(times)
    assert f2.counter0 + f2.counter1 == len(times) - len(dropped)
    assert all(m == 0 and m2 in (0, None) for _, m, m2 in d.egress)
    total_tx = sum(r.tx_count for r in d.collector.results())
    total_loss = sum(r.loss for r in d.collector.results())
    assert total_tx == len(times)
    assert total_loss == len(dropped)


def test_rearm_is_noop_under_continuous_traffic():
    times = [s(0.01) + i * 50_000_000 for i in range(2000)]  # 20 pkt/s for 100 s
    for mode in (Mode.MUXED, Mode.DOUBLE, Mode.PULSE):
        a = drive(mode, K, times, rearm=True)
        b = drive(mode, K, times, rearm=False)
        # the flow's very first packet may differ: the literal pulse table starts
        # from Reg=0 and skips the opening interval when TimeBit is 0
        assert a.wire[1:] == b.wire[1:]
    assert drive(Mode.MUXED, K, times).wire == drive(Mode.MUXED, K, times, rearm=False).wire


def test_literal_table_misses_pulse_after_gap():
    # the flow's first packet lands in slot 110 (color 1, third quarter); the
    # literal register starts at 0, which the muxed initiator table reads as "already pulsed"
    t = s(6.5)  # 6.5 s with k=2 -> Seconds[2:0] = 0b110
    literal = drive(Mode.MUXED, K, [t], rearm=False)
    assert not literal.wire[0][3]
    fixed = drive(Mode.MUXED, K, [t])
    assert fixed.wire[0][3] and fixed.wire[0][1] == 0
