"""``harvest-censor`` command line: solve, steady, simulate, learn and preset.

Every run writes its CSVs plus ``manifest.json`` (the fully resolved
configuration and arguments) into ``--out``.  Exit codes: 0 success, 2 bad
configuration, 3 convergence or degeneracy failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as X
from .config import build_scenario, load_scenario, resolve
from .errors import ConfigError, Degenerate, NoConvergence
from .learners import StepSchedule
from .mdp import value_iteration, write_policy_csv
from .network import run_multi_hop
from .sim import replicate, run_single_hop, summarize
from .steady import (
    balanced_performance,
    balanced_threshold,
    build_transition_matrix,
    expected_performance,
    nonselective_performance,
    stationary_distribution,
    write_phi_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INTERRUPT = 0, 2, 3, 130
REPLICATION_COLUMNS = ["replication", "seed", "v_hat", "frac_battery_zero", "tx_count", "censor_count"]
LEARNER_COLUMNS = ["k", "e", "x", "a", "eta", "mu_at_e"]

log = logging.getLogger("harvest_censor")


# ------------------------------------------------------------------ output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_rows(path, rows, columns=None):
    """Write dict rows to CSV with ``repr`` floats so reruns are byte-identical."""
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(columns)
        for r in rows:
            out.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


def write_manifest(out_dir, args, extra):
    info = {"version": __version__, "command": args.command,
            "argv": getattr(args, "argv", None),
            "globals": {"seed": args.seed, "replications": args.replications,
                        "horizon": args.horizon, "out": str(args.out)}}
    info.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(info, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (tuple, set, np.ndarray)):
        return list(o)
    return str(o)


# ------------------------------------------------------------------ helpers


def _scenario(args):
    scenario, cfg = load_scenario(args.config)
    if getattr(args, "gamma", None) is not None:
        cfg = dict(cfg, gamma=args.gamma)
        cfg = resolve(cfg)
        scenario = build_scenario(cfg)
    return scenario, cfg


def _schedule(args):
    if getattr(args, "eta", None) is not None:
        return StepSchedule.constant(args.eta)
    return StepSchedule.decaying(0.01 if args.delta is None else args.delta)


# ------------------------------------------------------------------ commands


def cmd_solve(args):
    scenario, cfg = _scenario(args)
    res = value_iteration(scenario, tol=args.tol, max_iter=args.max_iter)
    path = Path(args.out) / "policy.csv"
    write_policy_csv(path, res.policy, res.value)
    print(f"value iteration: {res.iterations} iterations, residual {res.residual:.3e}")
    write_manifest(args.out, args, {"config": cfg, "tol": args.tol, "max_iter": args.max_iter,
                                    "iterations": res.iterations, "residual": res.residual})
    return EXIT_OK


def _steady_row(scenario):
    costs, imp, B = scenario.costs, scenario.importance, scenario.B
    row = {"cbar0": costs.cbar0}
    try:
        pol = value_iteration(scenario).policy
        phi = stationary_distribution(build_transition_matrix(pol, costs, imp))
        row["V_opt"] = expected_performance(pol, costs, imp, scenario.gamma, phi)
        row["V_bal"] = balanced_performance(balanced_threshold(costs, imp), costs, imp, scenario.gamma, B)
        row["V_ns"] = nonselective_performance(costs, imp, scenario.gamma, B)
    except Degenerate as exc:
        warnings.warn(f"degenerate steady state at cbar0={costs.cbar0:g}: {exc}; recorded as NaN")
        row.update(V_opt=math.nan, V_bal=math.nan, V_ns=math.nan)
        phi = None
    return row, phi


def cmd_steady(args):
    scenario, cfg = _scenario(args)
    sweep = args.m_b or [cfg["harvest"]["m_b"]]
    rows = []
    for i, m_b in enumerate(sweep):
        costs = scenario.costs
        sc = scenario.replace(costs=replace(costs, harvest=replace(costs.harvest, m_b=float(m_b))))
        row, phi = _steady_row(sc)
        rows.append(row)
        if i == 0 and phi is not None:
            write_phi_csv(Path(args.out) / "phi.csv", phi)
    write_rows(Path(args.out) / "steady.csv", rows, ["cbar0", "V_opt", "V_bal", "V_ns"])
    write_manifest(args.out, args, {"config": cfg, "m_b_sweep": list(sweep)})
    return EXIT_OK


def _run_policy(args, scenario, kind, horizon, opt):
    if args.topology == "single_hop":
        pol = X.make_policy(kind, scenario, _schedule(args), opt)
        return lambda r, s: run_single_hop(scenario, pol, horizon, s, keep_trace=args.battery_trace)
    if kind == "q":
        raise ConfigError("Q-learning is only available for single-hop runs")
    size = args.size if args.topology == "random_tree" else tuple(args.grid)
    spec = {"kind": args.topology, "size": size, "sink": args.sink}
    nk = "threshold" if kind == "opt" else kind
    if nk == "threshold":
        raise ConfigError("fixed optimal policies are only available for single-hop runs")
    X.scenario_topology(spec, np.random.SeedSequence(args.seed))  # fail fast on a bad topology
    return lambda r, s: run_multi_hop(X.scenario_topology(spec, s), scenario, nk, horizon, s,
                                      gen_prob=args.gen_prob, schedule=_schedule(args),
                                      keep_trace=args.battery_trace)


def cmd_simulate(args):
    scenario, cfg = _scenario(args)
    kinds = [k.strip() for k in args.policies.split(",") if k.strip()]
    horizon = args.horizon or 100_000
    reps = args.replications or 100
    opt = value_iteration(scenario).policy if "opt" in kinds else None
    out = Path(args.out)
    per_rep, summary = [], []
    trace_fh = None
    try:
        if args.battery_trace:
            trace_fh = open(out / "battery_trace.csv", "w", newline="")
            trace_w = csv.writer(trace_fh)
            trace_w.writerow(["policy", "replication", "slot", "node", "e"])
        for kind in kinds:
            outs = replicate(_run_policy(args, scenario, kind, horizon, opt), reps, args.seed)
            v = [o.v_hat for o in outs]
            m, s, n = summarize(v)
            summary.append({"policy": kind, "mean": m, "std": s, "count": n})
            per_rep += [X.replication_row(kind, r, o) for r, o in enumerate(outs)]
            if trace_fh is not None:
                for r, o in enumerate(outs):
                    _dump_trace(trace_w, kind, r, o)
            # flush after every policy so an interrupt keeps finished work
            write_rows(out / "replications.csv", per_rep, ["policy"] + REPLICATION_COLUMNS)
            write_rows(out / "aggregate.csv", summary, ["policy", "mean", "std", "count"])
    finally:
        if trace_fh is not None:
            trace_fh.close()
        write_manifest(out, args, {"config": cfg, "policies": kinds, "topology": args.topology,
                                   "size": args.size, "grid": args.grid, "sink": args.sink,
                                   "gen_prob": args.gen_prob, "delta": args.delta, "eta": args.eta,
                                   "horizon": horizon, "replications": reps,
                                   "completed_policies": [r["policy"] for r in summary]})
    for r in summary:
        print(f"{r['policy']:>6}: mean V-hat {r['mean']:.3f} (std {r['std']:.3f}, n={r['count']})")
    return EXIT_OK


def _dump_trace(w, kind, rep, o):
    tr = o.battery
    if tr is None:
        return
    if tr.ndim == 1:
        tr = tr[:, None]
    nodes = o.nodes if o.nodes is not None else [0]
    for t in range(tr.shape[0]):
        for j, node in enumerate(nodes):
            w.writerow([kind, rep, t, int(node), int(tr[t, j])])


def cmd_learn(args):
    scenario, cfg = _scenario(args)
    kind = args.learner
    horizon = args.horizon or 100_000
    sched = _schedule(args)
    pol = X.make_policy(kind, scenario, sched)
    out = run_single_hop(scenario, pol, horizon, np.random.SeedSequence(args.seed, spawn_key=(0,)),
                         keep_trace=True, log_mu=kind != "q", snapshot_every=args.dump_every)
    before = np.concatenate(([scenario.B], out.battery[:-1]))
    rows = [{"k": k, "e": int(before[k]), "x": float(out.importance[k]), "a": int(out.actions[k]),
             "eta": sched(k), "mu_at_e": float(out.mu_trace[k]) if out.mu_trace is not None else math.nan}
            for k in range(horizon)]
    write_rows(Path(args.out) / "learner_trace.csv", rows, LEARNER_COLUMNS)
    if out.snapshots:
        dump = []
        for k, s in out.snapshots:
            if kind == "sap":
                for e in range(scenario.B + 1):
                    dump.append({"k": k, "e": e, "omega": s.omega[e], "alpha": s.alpha[e],
                                 "beta": s.beta[e], "lambda": s.lam[e], "mu": s.mu[e]})
            else:
                dump.append({"k": k, "mu": s.mu, "c0_mean": s.c0_mean, "c1_mean": s.c1_mean,
                             "rho": s.rho if s.rho is not None else math.nan})
        write_rows(Path(args.out) / "learner_dump.csv", dump)
    print(f"{kind}: V-hat {out.v_hat:.3f} over {horizon} epochs")
    write_manifest(args.out, args, {"config": cfg, "learner": kind, "schedule": [sched.kind, sched.value],
                                    "horizon": horizon, "dump_every": args.dump_every})
    return EXIT_OK


# ------------------------------------------------------------------ presets


def _preset_kwargs(args, defaults):
    kw = dict(defaults)
    if args.replications is not None and "replications" in kw:
        kw["replications"] = args.replications
    if args.horizon is not None and "horizon" in kw:
        kw["horizon"] = args.horizon
    if "seed" in kw:
        kw["seed"] = args.seed
    return kw


def cmd_preset(args):
    name = args.name
    out = Path(args.out)
    params = {}
    if name == "fig2":
        for m_b, (cbar0, res) in X.fig2().items():
            write_policy_csv(out / f"fig2_mu_mb{m_b}.csv", res.policy, res.value)
            print(f"m_b={m_b}: cbar0={cbar0:.3f}, {res.iterations} iterations")
    elif name == "fig3":
        curves, mu_bar = X.fig3()
        for B, res in curves.items():
            write_policy_csv(out / f"fig3_mu_B{B}.csv", res.policy, res.value)
        write_rows(out / "fig3_mu_bar.csv", [{"mu_bar": mu_bar}])
    elif name in ("fig4", "fig5"):
        rows = getattr(X, name)()
        write_rows(out / f"{name}_steady.csv", rows, ["cbar0", "V_opt", "V_bal", "V_ns"])
        params = {"sweep": X.FIG4 if name == "fig4" else X.FIG5}
    elif name == "fig7":
        params = _preset_kwargs(args, {"replications": 100, "seed": 1})
        if args.horizon is not None:
            params["horizons"] = tuple(h for h in (1_000, 10_000, 100_000) if h < args.horizon) + (args.horizon,)
        write_rows(out / "fig7_learning_curves.csv", X.fig7(**params))
    elif name == "fig8":
        params = _preset_kwargs(args, {"replications": 100, "horizon": 100_000, "seed": 1})
        write_rows(out / "fig8_sweep.csv", X.fig8(**params))
    elif name == "fig9":
        params = _preset_kwargs(args, {"replications": 20, "horizon": 100_000, "seed": 1})
        write_rows(out / "fig9_mu_bands.csv", X.fig9(**params))
    elif name == "table2":
        params = _preset_kwargs(args, {"replications": 200, "horizon": 100_000, "seed": 1})
        summary, per_rep = X.table2(**params)
        write_rows(out / "table2_aggregate.csv", summary)
        write_rows(out / "table2_replications.csv", per_rep, ["policy"] + REPLICATION_COLUMNS)
    elif name == "fig11":
        params = _preset_kwargs(args, {"replications": 200, "horizon": 20_000, "seed": 1})
        summary, per_rep = X.fig11(**params)
        write_rows(out / "fig11_aggregate.csv", summary)
        write_rows(out / "fig11_replications.csv", per_rep, ["scenario", "policy"] + REPLICATION_COLUMNS)
    else:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(X.PRESETS)}")
    write_manifest(out, args, {"preset": name, "params": params})
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser():
    p = argparse.ArgumentParser(prog="harvest-censor", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int, default=1, help="master seed (default 1)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None, help="epochs (single hop) or slots (multi-hop)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="value iteration; writes policy.csv")
    s.add_argument("config")
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=1_000_000)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("steady", help="OPT/BAL/NS stationary values; writes steady.csv and phi.csv")
    s.add_argument("config")
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--m-b", type=float, nargs="+", default=None, help="sweep of harvest.m_b values")
    s.set_defaults(func=cmd_steady)

    s = sub.add_parser("simulate", help="replicated simulations; writes replications.csv and aggregate.csv")
    s.add_argument("config")
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--policies", default="opt,sap,abt,ns", help="comma list of opt, ns, sap, abt, abt_metered, q")
    s.add_argument("--topology", choices=("single_hop", "random_tree", "grid"), default="single_hop")
    s.add_argument("--size", type=int, default=20, help="random tree size including the sink")
    s.add_argument("--grid", type=int, nargs=2, default=(3, 3), metavar=("ROWS", "COLS"))
    s.add_argument("--sink", default="corner", help="grid sink: corner, center or a node id")
    s.add_argument("--gen-prob", type=float, default=0.1)
    s.add_argument("--delta", type=float, default=None, help="decaying step 1/(1+delta k)")
    s.add_argument("--eta", type=float, default=None, help="constant step (overrides --delta)")
    s.add_argument("--battery-trace", action="store_true", help="also write battery_trace.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("learn", help="single learner run; writes learner_trace.csv")
    s.add_argument("config")
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--learner", choices=("sap", "abt", "abt_metered", "q"), default="sap")
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--dump-every", type=int, default=0, help="full learner dump period in epochs")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("preset", help="reproduce one of the stock experiments")
    s.add_argument("name", choices=X.PRESETS)
    s.set_defaults(func=cmd_preset)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if str(getattr(args, "sink", "")).isdigit():
        args.sink = int(args.sink)
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergence, Degenerate) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        print("interrupted; partial results were flushed", file=sys.stderr)
        return EXIT_INTERRUPT


if __name__ == "__main__":
    sys.exit(main())
