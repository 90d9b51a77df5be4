"""JSON scenario files.

Schema (every key except ``mode``, ``interval_bit`` and ``flows`` is optional)::

    {
      "mode": "muxed",                  # step | pulse | double | muxed
      "interval_bit": 4,                # interval = 2**k seconds
      "seed": 42,
      "flows": [
        {"flow_id": 1, "rate": 625, "start": 0, "duration": 160,
         "spacing": "constant"}         # or "uniform"
      ],
      "link": {
        "base_delay_ns": 300000,
        "jitter": {"kind": "uniform", "max_ns": 1000},   # none | uniform | symmetric
        "drop": {"kind": "bernoulli", "p": 0.01}          # none | bernoulli | burst
                                                          # burst: period, burst_len
      },
      "clock_offsets_ns": {"mp1": 0, "mp2": 0},
      "tolerances": {"loss": 0, "delay_ns": 0}
    }
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any

from ampm.errors import ScenarioFileError, ScenarioRangeError, ScenarioSchemaError, ScenarioSyntaxError
from ampm.marking import MarkingMode, Mode
from ampm.simnet import MP1, MP2, DropModel, FlowConfig, JitterModel, LinkConfig, Scenario

_TOP = {"mode", "interval_bit", "seed", "flows", "link", "clock_offsets_ns", "tolerances"}
_FLOW = {"flow_id", "rate", "start", "duration", "spacing"}
_LINK = {"base_delay_ns", "jitter", "drop"}
_JITTER = {"kind", "max_ns"}
_DROP = {"kind", "p", "period", "burst_len"}
_TOL = {"loss", "delay_ns"}


def _obj(value: Any, path: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(value, dict):
        raise ScenarioSchemaError(path, "expected an object")
    for key in value:
        if key not in allowed:
            raise ScenarioSchemaError(f"{path}.{key}" if path else key, "unknown key")
    for key in required:
        if key not in value:
            raise ScenarioSchemaError(f"{path}.{key}" if path else key, "missing required key")
    return value


def _int(d: dict, key: str, path: str, default=None, lo=None) -> int:
    v = d.get(key, default)
    name = f"{path}.{key}" if path else key
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioSchemaError(name, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ScenarioRangeError(name, f"must be >= {lo}, got {v}")
    return v


def _num(d: dict, key: str, path: str, default=None) -> float:
    v = d.get(key, default)
    name = f"{path}.{key}"
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioSchemaError(name, f"expected a finite number, got {v!r}")
    return v


def _str(d: dict, key: str, path: str, choices: tuple[str, ...], default=None) -> str:
    v = d.get(key, default)
    name = f"{path}.{key}" if path else key
    if v not in choices:
        raise ScenarioRangeError(name, f"must be one of {', '.join(choices)}, got {v!r}")
    return v


def scenario_from_dict(data: Any) -> Scenario:
    data = _obj(data, "", _TOP, {"mode", "interval_bit", "flows"})
    mode_name = _str(data, "mode", "", tuple(m.value for m in Mode))
    k = _int(data, "interval_bit", "", lo=0)
    if k > 62:
        raise ScenarioRangeError("interval_bit", f"must be <= 62, got {k}")
    if mode_name in ("muxed", "double") and k < 2:
        raise ScenarioRangeError("interval_bit", f"{mode_name} requires k >= 2")
    seed = _int(data, "seed", "", default=0, lo=0)

    raw_flows = data["flows"]
    if not isinstance(raw_flows, list) or not raw_flows:
        raise ScenarioSchemaError("flows", "expected a non-empty list")
    flows = []
    seen = set()
    for i, f in enumerate(raw_flows):
        path = f"flows[{i}]"
        f = _obj(f, path, _FLOW, {"flow_id", "rate", "duration"})
        fid = _int(f, "flow_id", path, lo=0)
        if fid in seen:
            raise ScenarioRangeError(f"{path}.flow_id", f"duplicate flow id {fid}")
        seen.add(fid)
        rate = _num(f, "rate", path)
        if rate <= 0:
            raise ScenarioRangeError(f"{path}.rate", f"must be > 0, got {rate}")
        start = _num(f, "start", path, default=0)
        if start < 0:
            raise ScenarioRangeError(f"{path}.start", f"must be >= 0, got {start}")
        duration = _num(f, "duration", path)
        if duration <= 0:
            raise ScenarioRangeError(f"{path}.duration", f"must be > 0, got {duration}")
        spacing = _str(f, "spacing", path, ("constant", "uniform"), default="constant")
        flows.append(FlowConfig(fid, rate, duration, start, spacing))

    link_d = _obj(data.get("link", {}), "link", _LINK)
    base = _int(link_d, "base_delay_ns", "link", default=0, lo=0)
    jd = _obj(link_d.get("jitter", {}), "link.jitter", _JITTER)
    jkind = _str(jd, "kind", "link.jitter", ("none", "uniform", "symmetric"), default="none")
    jmax = _int(jd, "max_ns", "link.jitter", default=0, lo=0)
    if jkind == "symmetric" and jmax > base:
        raise ScenarioRangeError("link.jitter.max_ns", "symmetric jitter must not exceed base_delay_ns")
    dd = _obj(link_d.get("drop", {}), "link.drop", _DROP)
    dkind = _str(dd, "kind", "link.drop", ("none", "bernoulli", "burst"), default="none")
    p = _num(dd, "p", "link.drop", default=0.0)
    if not 0.0 <= p <= 1.0:
        raise ScenarioRangeError("link.drop.p", f"must be in [0, 1], got {p}")
    period = _int(dd, "period", "link.drop", default=0, lo=0)
    burst_len = _int(dd, "burst_len", "link.drop", default=0, lo=0)
    if dkind == "burst":
        if period <= 0:
            raise ScenarioRangeError("link.drop.period", "burst drop needs period > 0")
        if burst_len > period:
            raise ScenarioRangeError("link.drop.burst_len", "must not exceed period")

    od = _obj(data.get("clock_offsets_ns", {}), "clock_offsets_ns", {MP1, MP2})
    offsets = {MP1: _int(od, MP1, "clock_offsets_ns", default=0),
               MP2: _int(od, MP2, "clock_offsets_ns", default=0)}
    td = _obj(data.get("tolerances", {}), "tolerances", _TOL)

    return Scenario(
        mode=MarkingMode(Mode(mode_name), k),
        flows=tuple(flows),
        link=LinkConfig(base, JitterModel(jkind, jmax), DropModel(dkind, p, period, burst_len)),
        offsets_ns=offsets,
        seed=seed,
        loss_tolerance=_int(td, "loss", "tolerances", default=0, lo=0),
        delay_tolerance_ns=_int(td, "delay_ns", "tolerances", default=0, lo=0),
    )


def parse_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioFileError(f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioSyntaxError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(data)


def scenario_to_dict(sc: Scenario) -> dict:
    link = sc.link
    return {
        "mode": sc.mode.kind.value,
        "interval_bit": sc.mode.interval_bit,
        "seed": sc.seed,
        "flows": [
            {"flow_id": f.flow_id, "rate": f.rate, "start": f.start,
             "duration": f.duration, "spacing": f.spacing}
            for f in sc.flows
        ],
        "link": {
            "base_delay_ns": link.base_delay_ns,
            "jitter": {"kind": link.jitter.kind, "max_ns": link.jitter.max_ns},
            "drop": {"kind": link.drop.kind, "p": link.drop.p,
                     "period": link.drop.period, "burst_len": link.drop.burst_len},
        },
        "clock_offsets_ns": {MP1: sc.offset(MP1), MP2: sc.offset(MP2)},
        "tolerances": {"loss": sc.loss_tolerance, "delay_ns": sc.delay_tolerance_ns},
    }


def scenario_digest(sc: Scenario) -> str:
    canon = json.dumps(scenario_to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
