"""Alternate marking loss/delay measurement with time-multiplexed parsing."""

from ampm.collector import Collector, IntervalResult, collection_schedule
from ampm.marking import (
    ExportRecord,
    MarkingMode,
    MeasurementPoint,
    Mode,
    Packet,
    Role,
    build_rule_table,
    pulse_state_step,
)
from ampm.pipeline import Action, FlowState, MatchKey, RuleTable, TernaryRule, apply_action, table_lookup
from ampm.simnet import DropModel, FlowConfig, JitterModel, LinkConfig, Scenario, run
from ampm.timebase import Clock, Timestamp, clock_now, ternary_match, time_bit, time_slot

__version__ = "0.1.0"
