"""Scenario files: YAML or JSON mappings turned into :class:`ScenarioModel`.

Schema (every key optional except where a model needs it)::

    battery:    {capacity}
    cost:       {c_I, c_R, c_T, p_fail, m_S, fixed_slots}
    harvest:    {kind, p_b | p_h, m_b, e_H, schedule: [{slots, p_b | p_h, m_b, e_H}, ...]}
    importance: {kind: exponential, mean} | {kind: empirical, values, probs}
    gamma

Unknown keys and fractional energy amounts are rejected with ConfigError.
"""

from __future__ import annotations

import json
from pathlib import Path

import yaml

from .env import (
    CostModel,
    EmpiricalImportance,
    ExponentialImportance,
    HarvestModel,
    Regime,
    ScenarioModel,
)
from .errors import ConfigError

SECTIONS = {
    "battery": {"capacity"},
    "cost": {"c_I", "c_R", "c_T", "p_fail", "m_S", "fixed_slots"},
    "harvest": {"kind", "p_b", "p_h", "m_b", "e_H", "schedule"},
    "importance": {"kind", "mean", "values", "probs"},
}
TOP_LEVEL = set(SECTIONS) | {"gamma"}
REGIME_KEYS = {"slots", "p_b", "p_h", "m_b", "e_H"}

DEFAULTS = {
    "battery": {"capacity": 100},
    "cost": {"c_I": 0, "c_R": 0, "c_T": 1, "p_fail": 0.0, "m_S": 1.0, "fixed_slots": False},
    "harvest": {"kind": "per_slot_geometric", "p_b": 0.0, "m_b": 1.0, "e_H": 0, "schedule": []},
    "importance": {"kind": "exponential", "mean": 1.0},
    "gamma": 0.999,
}


def _check_keys(where, given, allowed):
    extra = set(given) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def _energy(where, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"{where} must be an integer energy amount, got {v!r}")
    return int(v)


def _real(where, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    return float(v)


def _prob_key(where, d):
    if "p_b" in d and "p_h" in d:
        raise ConfigError(f"{where}: give either p_b or p_h, not both")
    return d.get("p_b", d.get("p_h"))


def resolve(raw):
    """Validate a raw mapping and fill defaults; returns a plain nested dict."""
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping")
    _check_keys("scenario", raw, TOP_LEVEL)
    out = {}
    for name, allowed in SECTIONS.items():
        sec = raw.get(name) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        _check_keys(name, sec, allowed)
        merged = dict(DEFAULTS[name])
        merged.update(sec)
        out[name] = merged
    out["gamma"] = _real("gamma", raw.get("gamma", DEFAULTS["gamma"]))

    out["battery"]["capacity"] = _energy("battery.capacity", out["battery"]["capacity"])
    cost = out["cost"]
    for k in ("c_I", "c_R", "c_T"):
        cost[k] = _energy(f"cost.{k}", cost[k])
    cost["p_fail"] = _real("cost.p_fail", cost["p_fail"])
    cost["m_S"] = _real("cost.m_S", cost["m_S"])
    cost["fixed_slots"] = bool(cost["fixed_slots"])

    h = out["harvest"]
    p = _prob_key("harvest", raw.get("harvest") or {})
    h.pop("p_h", None)
    h["p_b"] = _real("harvest.p_b", p if p is not None else DEFAULTS["harvest"]["p_b"])
    h["m_b"] = _real("harvest.m_b", h["m_b"])
    h["e_H"] = _energy("harvest.e_H", h["e_H"])
    sched = []
    for i, reg in enumerate(h["schedule"] or []):
        where = f"harvest.schedule[{i}]"
        if not isinstance(reg, dict):
            raise ConfigError(f"{where} must be a mapping")
        _check_keys(where, reg, REGIME_KEYS)
        if "slots" not in reg:
            raise ConfigError(f"{where} needs 'slots'")
        r = {"slots": _energy(f"{where}.slots", reg["slots"])}
        rp = _prob_key(where, reg)
        if rp is not None:
            r["p_b"] = _real(f"{where}.p_b", rp)
        if "m_b" in reg:
            r["m_b"] = _real(f"{where}.m_b", reg["m_b"])
        if "e_H" in reg:
            r["e_H"] = _energy(f"{where}.e_H", reg["e_H"])
        sched.append(r)
    h["schedule"] = sched

    imp = out["importance"]
    if imp["kind"] == "exponential":
        imp.pop("values", None)
        imp.pop("probs", None)
        imp["mean"] = _real("importance.mean", imp["mean"])
    elif imp["kind"] == "empirical":
        if "values" not in imp or "probs" not in imp:
            raise ConfigError("empirical importance needs 'values' and 'probs'")
        imp.pop("mean", None)
        imp["values"] = [_real("importance.values", v) for v in imp["values"]]
        imp["probs"] = [_real("importance.probs", v) for v in imp["probs"]]
    else:
        raise ConfigError(f"unknown importance kind {imp['kind']!r}")
    # building the model runs the remaining range checks
    build_scenario(out)
    return out


def build_scenario(cfg):
    """Turn a resolved config dict into a :class:`ScenarioModel`."""
    h = cfg["harvest"]
    sched = tuple(Regime(r["slots"], r.get("p_b"), r.get("m_b"), r.get("e_H")) for r in h["schedule"])
    harvest = HarvestModel(h["kind"], h["p_b"], h["m_b"], h["e_H"], sched)
    c = cfg["cost"]
    costs = CostModel(c["c_I"], c["c_R"], c["c_T"], c["p_fail"], c["m_S"], harvest, c["fixed_slots"])
    imp = cfg["importance"]
    if imp["kind"] == "exponential":
        importance = ExponentialImportance(imp["mean"])
    else:
        importance = EmpiricalImportance(imp["values"], imp["probs"])
    return ScenarioModel(cfg["battery"]["capacity"], costs, importance, cfg["gamma"])


def to_config(scenario):
    """Inverse of :func:`build_scenario` for scenarios built from :class:`CostModel`."""
    c, h, imp = scenario.costs, scenario.costs.harvest, scenario.importance
    if isinstance(imp, ExponentialImportance):
        imp_cfg = {"kind": "exponential", "mean": float(imp.scale)}
    else:
        imp_cfg = {"kind": "empirical", "values": [float(v) for v in imp.values],
                   "probs": [float(p) for p in imp.probs]}
    sched = []
    for r in h.schedule:
        d = {"slots": int(r.slots)}
        if r.p is not None:
            d["p_b"] = float(r.p)
        if r.m_b is not None:
            d["m_b"] = float(r.m_b)
        if r.e_H is not None:
            d["e_H"] = int(r.e_H)
        sched.append(d)
    return {
        "battery": {"capacity": scenario.B},
        "cost": {"c_I": int(c.c_I), "c_R": int(c.c_R), "c_T": int(c.c_T), "p_fail": float(c.p_fail),
                 "m_S": float(c.m_S), "fixed_slots": bool(c.fixed_slots)},
        "harvest": {"kind": h.kind, "p_b": float(h.p), "m_b": float(h.m_b), "e_H": int(h.e_H),
                    "schedule": sched},
        "importance": imp_cfg,
        "gamma": float(scenario.gamma),
    }


def load_raw(path):
    text = Path(path).read_text()
    try:
        if str(path).endswith(".json"):
            return json.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def load_scenario(path):
    """Read, validate and build; returns ``(scenario, resolved_dict)``."""
    cfg = resolve(load_raw(path))
    return build_scenario(cfg), cfg
