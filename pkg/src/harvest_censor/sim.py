"""Single-node epoch simulator and the replication harness.

All random draws for a run are made up front from one numpy generator (in a
fixed order: importance, costs, exploration) and then replayed through a
compiled epoch loop, so an outcome depends only on the scenario, the policy
and the seed.
"""

from __future__ import annotations

import copy
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .env import clip
from .learners import AbtState, QTable, SapState
from .mdp import ThresholdPolicy

NS = "ns"
THREADS_ENV = "HARVEST_CENSOR_THREADS"


@dataclass
class SimulationOutcome:
    v_hat: float
    epochs: int
    seed: object
    tx_count: np.ndarray
    censor_count: np.ndarray
    battery_min: np.ndarray
    battery_mean: np.ndarray
    frac_battery_zero: np.ndarray
    learner: object = None
    v_hat_at: dict = field(default_factory=dict)
    rewards: np.ndarray | None = None
    battery: np.ndarray | None = None
    actions: np.ndarray | None = None
    importance: np.ndarray | None = None
    mu_trace: np.ndarray | None = None
    snapshots: list | None = None
    nodes: np.ndarray | None = None

    @property
    def total_tx(self):
        return int(np.sum(self.tx_count))

    @property
    def total_censor(self):
        return int(np.sum(self.censor_count))


def discounted_window(rewards, gamma, horizon=None):
    """``sum_{k >= K/2} gamma^(k - K/2) r_k`` over the first ``K`` rewards."""
    K_ = len(rewards) if horizon is None else int(horizon)
    start = K_ // 2
    window = np.asarray(rewards[start:K_], dtype=float)
    if window.size == 0:
        return 0.0
    return float(np.dot(window, gamma ** np.arange(window.size)))


def policy_kind(policy):
    if isinstance(policy, str):
        if policy.lower() != NS:
            raise ValueError(f"unknown policy {policy!r}")
        return NS
    if isinstance(policy, ThresholdPolicy):
        return "threshold"
    if isinstance(policy, SapState):
        return "sap"
    if isinstance(policy, AbtState):
        return "abt"
    if isinstance(policy, QTable):
        return "q"
    raise TypeError(f"unsupported policy type {type(policy).__name__}")


def node_stream(seed, node=0):
    """Independent generator for one node: spawn key ``(..., node)`` under ``seed``.

    ``seed`` is an int or a :class:`numpy.random.SeedSequence`; a ready-made
    generator is passed through untouched.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.default_rng(
        np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (int(node),)))


def run_single_hop(scenario, policy, horizon, seed, e0=None, x=None, keep_trace=False,
                   horizons=(), audit=False, log_mu=False, snapshot_every=0):
    """Simulate ``horizon`` epochs of one node transmitting straight to the sink.

    ``policy`` is a :class:`ThresholdPolicy`, ``"ns"`` or a learner; learners
    are copied so the argument is never mutated and the trained copy is
    returned in ``outcome.learner``.  ``x`` replaces the sampled importances
    with a scripted sequence.  ``horizons`` lists extra ``K`` values whose
    windowed estimate is reported in ``v_hat_at``.  With ``snapshot_every``
    a SAP or ABT learner is copied every that many epochs into
    ``outcome.snapshots`` as ``(epochs_done, learner)`` pairs.
    """
    horizon = int(horizon)
    if horizon < 2:
        raise ValueError(f"horizon must be at least 2 epochs, got {horizon}")
    kind = policy_kind(policy)
    rng = node_stream(seed, 0)
    B = scenario.B
    gamma = scenario.gamma
    e = B if e0 is None else int(e0)
    if x is None:
        x = scenario.importance.sample(rng, horizon)
    x = np.ascontiguousarray(x, dtype=float)[:horizon]
    draws = scenario.costs.sample_epochs(rng, horizon)
    c0 = np.ascontiguousarray(draws.c0, dtype=np.int64)
    delta = np.ascontiguousarray(draws.delta, dtype=np.int64)

    rewards = np.zeros(horizon)
    battery = np.zeros(horizon, dtype=np.int64)
    actions = np.zeros(horizon, dtype=np.int8)
    mu_log = np.zeros(horizon if log_mu else 0)
    learner = None

    if kind in ("threshold", NS):
        if kind == NS:
            mu = w = np.zeros(B + 1)
        else:
            mu, w = policy.mu, policy.w
        K.episode_threshold(e, B, x, c0, delta, mu, w, kind == NS, rewards, battery, actions)
    elif kind in ("sap", "abt"):
        learner = copy.deepcopy(policy)
        mode, param = learner.schedule.code
        step = int(snapshot_every) if snapshot_every else max(horizon, 1)
        snaps = []
        e_chunk = e
        for lo in range(0, horizon, step):
            hi = min(lo + step, horizon)
            sl = slice(lo, hi)
            mu_sl = mu_log[sl] if log_mu else mu_log
            if kind == "sap":
                K.episode_sap(e_chunk, B, x[sl], c0[sl], delta[sl], learner.omega, learner.alpha,
                              learner.beta, learner.lam, float(learner.gamma), mode, param,
                              learner.k, rewards[sl], battery[sl], actions[sl], mu_sl)
            else:
                state = learner.to_array()
                K.episode_abt(e_chunk, B, x[sl], c0[sl], delta[sl], state, mode, param, learner.k,
                              rewards[sl], battery[sl], actions[sl], mu_sl)
                learner.load_array(state)
            learner.k += hi - lo
            e_chunk = int(battery[hi - 1])
            if snapshot_every:
                snaps.append((hi, copy.deepcopy(learner)))
    else:
        learner = copy.deepcopy(policy)
        explore = rng.random(horizon)
        coin = rng.random(horizon)
        K.episode_q(e, B, x, c0, delta, explore, coin, learner.q, learner.width,
                    learner.n_bins, learner.alpha, learner.epsilon, learner.gamma,
                    rewards, battery, actions)

    if audit:
        audit_energy(e, B, c0, delta, actions, battery)
    tx = int(actions.sum())
    out = SimulationOutcome(
        v_hat=discounted_window(rewards, gamma),
        epochs=horizon,
        seed=seed,
        tx_count=np.array([tx]),
        censor_count=np.array([horizon - tx]),
        battery_min=np.array([battery.min() if horizon else e]),
        battery_mean=np.array([battery.mean() if horizon else float(e)]),
        frac_battery_zero=np.array([np.mean(battery == 0) if horizon else 0.0]),
        learner=learner,
        v_hat_at={int(h): discounted_window(rewards, gamma, h) for h in horizons},
    )
    if log_mu:
        out.mu_trace = mu_log
    if snapshot_every and kind in ("sap", "abt"):
        out.snapshots = snaps
    if keep_trace:
        out.rewards, out.battery, out.actions, out.importance = rewards, battery, actions, x
    return out


def audit_energy(e0, B, c0, delta, actions, battery):
    """Check ``e_{k+1} = clip(e_k - c0_k - a_k delta_k)`` for every epoch."""
    before = np.concatenate(([e0], battery[:-1]))
    expected = clip(before - c0 - actions * delta, B)
    bad = np.flatnonzero(expected != battery)
    if bad.size:
        k = int(bad[0])
        raise AssertionError(f"energy accounting broken at epoch {k}: "
                             f"expected {expected[k]}, got {battery[k]}")
    if battery.size and (battery.min() < 0 or battery.max() > B):
        raise AssertionError("battery left [0, B]")


def run_non_stationary(scenario, policy, horizon, seed, **kw):
    """Like :func:`run_single_hop` for a scenario with a harvest schedule.

    The battery trajectory is always kept in the outcome.
    """
    if scenario.costs.stationary:
        raise ValueError("run_non_stationary needs a non-empty harvest schedule")
    kw.setdefault("keep_trace", True)
    return run_single_hop(scenario, policy, horizon, seed, **kw)


# ------------------------------------------------------------- replications

def replication_seed(master, rep):
    """Seed of replication ``rep``; node ``i`` then draws from spawn key ``(rep, i)``."""
    return np.random.SeedSequence(int(master), spawn_key=(int(rep),))


def worker_count(requested=None):
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def replicate(fn, replications, master_seed, threads=None):
    """Run ``fn(rep, seed_sequence)`` for every replication; results in rep order.

    Replications share nothing, so they are farmed out to a thread pool (the
    compiled loops release the GIL).
    """
    seeds = [replication_seed(master_seed, r) for r in range(int(replications))]
    n = worker_count(threads)
    if n == 1 or replications <= 1:
        return [fn(r, s) for r, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, range(len(seeds)), seeds))


def simulate_replications(scenario, policy, horizon, replications, master_seed,
                          runner=run_single_hop, threads=None, **kw):
    return replicate(lambda r, s: runner(scenario, policy, horizon, s, **kw),
                     replications, master_seed, threads)


def summarize(values):
    """``(mean, std, count)`` with the sample standard deviation."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan"), 0
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), std, int(v.size)


def standard_error(values):
    mean, std, n = summarize(values)
    return std / np.sqrt(n) if n else float("nan")
