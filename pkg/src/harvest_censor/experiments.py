"""Ready-made experiment presets and the small helpers they share.

Every preset returns plain rows (lists of dicts) so the CLI can dump them to
CSV and the tests can check them directly.  Presets accept smaller
replication counts and horizons for quick runs.
"""

from __future__ import annotations

import logging
import math
import warnings

import numpy as np

from .env import CostModel, ExponentialImportance, HarvestModel, Regime, ScenarioModel
from .errors import Degenerate
from .learners import AbtState, QTable, SapState, StepSchedule
from .mdp import value_iteration
from .network import build_topology, random_tree, run_multi_hop
from .sim import node_stream, replicate, run_single_hop, summarize
from .steady import (
    balanced_performance,
    balanced_threshold,
    expected_performance,
    nonselective_performance,
)

log = logging.getLogger(__name__)

GAMMA = 0.999
DELTA_GRID = (1.0, 0.1, 0.01, 1e-3, 1e-4)
TUNE_SEED = 99
TUNE_REPS = 20

# ------------------------------------------------------------- scenarios


def analytic_scenario(m_b, p_b=1 / 3, c_T=4, c_R=2, capacity=100, gamma=GAMMA):
    """Geometric-slot cost model with unit-mean exponential importance."""
    harvest = HarvestModel("per_slot_geometric", p_b, m_b)
    costs = CostModel(c_I=1, c_R=c_R, c_T=c_T, p_fail=0.4, m_S=2, harvest=harvest)
    return ScenarioModel(capacity, costs, ExponentialImportance(1.0), gamma)


def single_hop_scenario(p, e_H=30, c_R=3, c_T=5, p_fail=0.3, capacity=100, mean_x=2.0,
                        gamma=GAMMA, schedule=()):
    """One slot per epoch, Bernoulli harvest of ``e_H`` with probability ``p``."""
    harvest = HarvestModel("bernoulli_fixed", p, e_H=e_H, schedule=tuple(schedule))
    costs = CostModel(c_R=c_R, c_T=c_T, p_fail=p_fail, harvest=harvest)
    return ScenarioModel(capacity, costs, ExponentialImportance(mean_x), gamma)


def table2_scenario(high_e_H=30, low_e_H=5, high_slots=2500, low_slots=2500, p=0.3, capacity=100):
    """Periodic refill: a rich regime (cbar0 = -6) followed by a poor one (cbar0 = +1.5)."""
    sched = (Regime(high_slots, e_H=high_e_H), Regime(low_slots, e_H=low_e_H))
    return single_hop_scenario(p, e_H=high_e_H, capacity=capacity, schedule=sched)


def network_scenario(p, e_H=1, c_R=1, c_T=2, capacity=100, mean_x=2.0, gamma=GAMMA):
    """Per-node model for the multi-hop presets: small costs, no channel losses."""
    harvest = HarvestModel("bernoulli_fixed", p, e_H=e_H)
    costs = CostModel(c_I=0, c_R=c_R, c_T=c_T, p_fail=0.0, harvest=harvest)
    return ScenarioModel(capacity, costs, ExponentialImportance(mean_x), gamma)


FIG8_P = (0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
FIG11_SCENARIOS = (
    {"name": "tree20_p0.1", "kind": "random_tree", "size": 20, "sink": None, "p": 0.1},
    {"name": "tree20_p0.5", "kind": "random_tree", "size": 20, "sink": None, "p": 0.5},
    {"name": "tree10_p0.5", "kind": "random_tree", "size": 10, "sink": None, "p": 0.5},
    {"name": "grid_corner_p0.5", "kind": "grid", "size": (3, 3), "sink": "corner", "p": 0.5},
    {"name": "grid_corner_p0.9", "kind": "grid", "size": (3, 3), "sink": "corner", "p": 0.9},
    {"name": "grid_center_p0.9", "kind": "grid", "size": (3, 3), "sink": "center", "p": 0.9},
)

# ------------------------------------------------------------- policies


def make_policy(kind, scenario, schedule=None, opt=None):
    """Fresh policy object for ``kind`` in {opt, ns, sap, abt, abt_metered, q}."""
    if kind == "opt":
        return opt if opt is not None else value_iteration(scenario).policy
    if kind == "ns":
        return "ns"
    if kind == "sap":
        return SapState.zeros(scenario.B, scenario.gamma, schedule or StepSchedule())
    if kind in ("abt", "abt_metered"):
        return AbtState(schedule=schedule or StepSchedule(), metered=kind == "abt_metered")
    if kind == "q":
        return QTable.zeros(scenario.B, scenario.importance.mean, gamma=scenario.gamma)
    raise ValueError(f"unknown policy {kind!r}")


def v_hat_values(scenario, policy, horizon, replications, seed, horizons=(), **kw):
    """Per-replication V-hat; with ``horizons`` also the estimate at each shorter ``K``."""
    outs = replicate(lambda r, s: run_single_hop(scenario, policy, horizon, s, horizons=horizons, **kw),
                     replications, seed)
    vals = np.array([o.v_hat for o in outs])
    if not horizons:
        return vals
    return vals, {h: np.array([o.v_hat_at[h] for o in outs]) for h in horizons}


def tune_delta(scenario, kind, horizon, replications=TUNE_REPS, seed=TUNE_SEED, grid=DELTA_GRID):
    """Pick the decaying-step ``delta`` with the best mean V-hat on the tuning seeds."""
    scores = {}
    for d in grid:
        pol = make_policy(kind, scenario, StepSchedule.decaying(d))
        scores[d] = float(v_hat_values(scenario, pol, horizon, replications, seed).mean())
    best = max(scores, key=scores.get)
    log.info("tuned %s delta=%g scores=%s", kind, best, scores)
    return best, scores


def _agg(prefix, vals):
    m, s, n = summarize(vals)
    if not prefix:
        return {"mean": m, "std": s, "count": n}
    return {f"{prefix}_mean": m, f"{prefix}_std": s, f"{prefix}_count": n}


# ------------------------------------------------------------- analytic presets


def fig2(m_bs=(5, 10, 15), capacity=100, tol=1e-9):
    """Optimal threshold curves for several refill means; ``{m_b: (cbar0, result)}``."""
    out = {}
    for m_b in m_bs:
        sc = analytic_scenario(m_b, capacity=capacity)
        out[m_b] = (sc.costs.cbar0, value_iteration(sc, tol=tol))
    return out


def fig3(capacities=(20, 50, 100, 200), m_b=10, tol=1e-9):
    """Threshold curves across battery sizes plus the balanced threshold."""
    curves = {}
    sc = None
    for B in capacities:
        sc = analytic_scenario(m_b, capacity=B)
        curves[B] = value_iteration(sc, tol=tol)
    mu_bar = balanced_threshold(sc.costs, sc.importance)
    return curves, mu_bar


FIG4 = {"p_b": 1 / 3, "c_T": 4, "c_R": 2, "m_bs": tuple(range(1, 30))}
FIG5 = {"p_b": 0.04, "c_T": 2, "c_R": 2, "m_bs": tuple(range(55, 206, 10))}


def steady_sweep(p_b, c_T, c_R, m_bs, capacity=100, tol=1e-9):
    """``cbar0, V_opt, V_bal, V_ns`` rows; degenerate points become NaN with a warning."""
    rows = []
    for m_b in m_bs:
        sc = analytic_scenario(m_b, p_b, c_T, c_R, capacity)
        costs, imp = sc.costs, sc.importance
        row = {"m_b": m_b, "cbar0": costs.cbar0}
        try:
            pol = value_iteration(sc, tol=tol).policy
            row["V_opt"] = expected_performance(pol, costs, imp, sc.gamma)
            row["V_bal"] = balanced_performance(balanced_threshold(costs, imp), costs, imp,
                                                sc.gamma, capacity)
            row["V_ns"] = nonselective_performance(costs, imp, sc.gamma, capacity)
        except Degenerate as exc:
            warnings.warn(f"m_b={m_b}: {exc}; recorded as NaN")
            row.update(V_opt=math.nan, V_bal=math.nan, V_ns=math.nan)
        rows.append(row)
    return rows


def fig4(**kw):
    return steady_sweep(**{**FIG4, **kw})


def fig5(**kw):
    return steady_sweep(**{**FIG5, **kw})


# ------------------------------------------------------------- single-hop presets


def compare_single_hop(scenario, kinds, horizon, replications, seed, deltas=None, horizons=()):
    """Mean/std/count of V-hat for each policy kind; ``deltas`` maps learner kind to delta."""
    opt = value_iteration(scenario).policy if "opt" in kinds else None
    res = {}
    for kind in kinds:
        sched = StepSchedule.decaying(deltas[kind]) if deltas and kind in deltas else None
        pol = make_policy(kind, scenario, sched, opt)
        res[kind] = v_hat_values(scenario, pol, horizon, replications, seed, horizons=horizons)
    return res


def fig7(p=0.3, horizons=(1_000, 10_000, 100_000), replications=100, seed=1,
         tune_reps=TUNE_REPS, tune_seed=TUNE_SEED, kinds=("opt", "sap", "abt", "q", "ns")):
    """Learning curves: V-hat at several horizons for OPT, the learners and NS."""
    sc = single_hop_scenario(p)
    K = max(horizons)
    deltas = {k: tune_delta(sc, k, K, tune_reps, tune_seed)[0] for k in ("sap", "abt") if k in kinds}
    res = compare_single_hop(sc, kinds, K, replications, seed, deltas, horizons=tuple(horizons))
    rows = []
    for h in horizons:
        for kind in kinds:
            rows.append({"horizon": h, "policy": kind, "delta": deltas.get(kind, math.nan),
                         **_agg(None, res[kind][1][h])})
    return rows


def fig8(ps=FIG8_P, horizon=100_000, replications=100, seed=1, tune_reps=TUNE_REPS,
         tune_seed=TUNE_SEED, kinds=("opt", "sap", "abt", "ns")):
    """V-hat against cbar0 across harvesting probabilities, with the analytic optimum."""
    rows = []
    for p in ps:
        sc = single_hop_scenario(p)
        vi = value_iteration(sc)
        deltas = {k: tune_delta(sc, k, horizon, tune_reps, tune_seed)[0]
                  for k in ("sap", "abt") if k in kinds}
        res = compare_single_hop(sc, kinds, horizon, replications, seed, deltas)
        row = {"p": p, "cbar0": sc.costs.cbar0,
               "V_star": expected_performance(vi.policy, sc.costs, sc.importance, sc.gamma)}
        for kind in kinds:
            row.update(_agg(kind, res[kind]))
        row["delta_sap"] = deltas.get("sap", math.nan)
        row["delta_abt"] = deltas.get("abt", math.nan)
        rows.append(row)
    return rows


def fig9(ps=(0.2, 0.4), horizon=100_000, replications=20, seed=1, tune_reps=TUNE_REPS,
         tune_seed=TUNE_SEED):
    """Spread of SAP's learned threshold against the optimal one, per battery level."""
    rows = []
    for p in ps:
        sc = single_hop_scenario(p)
        mu_opt = value_iteration(sc).policy.mu
        d, _ = tune_delta(sc, "sap", horizon, tune_reps, tune_seed)
        pol = make_policy("sap", sc, StepSchedule.decaying(d))
        outs = replicate(lambda r, s: run_single_hop(sc, pol, horizon, s, keep_trace=True),
                         replications, seed)
        mus = np.array([o.learner.mu for o in outs])
        visits = sum(np.bincount(o.battery, minlength=sc.B + 1) for o in outs)
        for e in range(sc.B + 1):
            rows.append({"p": p, "cbar0": sc.costs.cbar0, "e": e, "mu_opt": float(mu_opt[e]),
                         "mu_sap_mean": float(mus[:, e].mean()),
                         "mu_sap_std": float(mus[:, e].std(ddof=1)) if len(mus) > 1 else 0.0,
                         "visits": int(visits[e])})
    return rows


def table2(horizon=100_000, replications=200, seed=1, eta_sap=0.5, eta_abt=0.05,
           kinds=("sap", "abt", "ns"), scenario=None):
    """Periodic-refill comparison; returns ``(summary_rows, per_replication_rows)``."""
    sc = scenario or table2_scenario()
    scheds = {"sap": StepSchedule.constant(eta_sap), "abt": StepSchedule.constant(eta_abt)}
    summary, per_rep = [], []
    for kind in kinds:
        pol = make_policy(kind, sc, scheds.get(kind))
        outs = replicate(lambda r, s: run_single_hop(sc, pol, horizon, s), replications, seed)
        v = np.array([o.v_hat for o in outs])
        z = np.array([o.frac_battery_zero[0] for o in outs])
        summary.append({"policy": kind, **_agg(None, v), "frac_battery_zero": float(z.mean())})
        per_rep += [replication_row(kind, r, o) for r, o in enumerate(outs)]
    return summary, per_rep


def replication_row(policy, rep, out):
    # replication seeds are SeedSequence(master, spawn_key=(rep,)): report the master
    seed = out.seed
    seed = int(seed.entropy) if hasattr(seed, "entropy") else seed
    return {"policy": policy, "replication": rep, "seed": seed, "v_hat": out.v_hat,
            "frac_battery_zero": float(np.mean(out.frac_battery_zero)),
            "tx_count": out.total_tx, "censor_count": out.total_censor}


# ------------------------------------------------------------- multi-hop presets


def scenario_topology(spec, seed):
    """Topology for one replication; random trees are redrawn from the replication seed."""
    if spec["kind"] == "random_tree":
        return random_tree(int(spec["size"]), node_stream(seed, 0))
    return build_topology(spec["kind"], spec["size"], spec["sink"])


def fig11(horizon=20_000, replications=200, seed=1, delta=0.01, gen_prob=0.1,
          kinds=("sap", "abt", "ns"), scenarios=FIG11_SCENARIOS, metered=False):
    """Six multi-hop scenarios; returns ``(summary_rows, per_replication_rows)``."""
    summary, per_rep = [], []
    for spec in scenarios:
        sc = network_scenario(spec["p"])
        for kind in kinds:
            def one(r, s, kind=kind):
                return run_multi_hop(scenario_topology(spec, s), sc, kind, horizon, s,
                                     gen_prob=gen_prob, schedule=StepSchedule.decaying(delta),
                                     metered=metered)
            outs = replicate(one, replications, seed)
            v = np.array([o.v_hat for o in outs])
            summary.append({"scenario": spec["name"], "policy": kind, **_agg(None, v)})
            per_rep += [{"scenario": spec["name"], **replication_row(kind, r, o)}
                        for r, o in enumerate(outs)]
    return summary, per_rep


PRESETS = ("fig2", "fig3", "fig4", "fig5", "fig7", "fig8", "fig9", "table2", "fig11")
