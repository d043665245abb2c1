"""Multi-hop networks: routing topologies and a slotted simulator.

Node ids are 1-based.  A random tree on ``n`` nodes uses node ``n`` as the
wired sink; a ``rows x cols`` grid numbers nodes row-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np
from numba import njit

from . import _kernels as K
from .errors import BadTopology
from .learners import AbtState, SapState, StepSchedule
from .sim import SimulationOutcome, node_stream

POLICY_CODES = {"ns": 0, "sap": 1, "abt": 2, "threshold": 3}


@dataclass(frozen=True, eq=False)
class Topology:
    """Next-hop routing toward a single sink.

    ``next_hop[i]`` is where node ``i`` forwards to; the sink maps to 0.
    Index 0 of the array is unused so ids can index it directly.
    """

    kind: str
    next_hop: np.ndarray
    sink: int
    dims: tuple = ()

    def __post_init__(self):
        validate_routing(self.next_hop, self.sink)

    @property
    def n_nodes(self):
        return len(self.next_hop) - 1

    @property
    def sensors(self):
        return [i for i in range(1, self.n_nodes + 1) if i != self.sink]

    def route(self, node):
        path = [node]
        while path[-1] != self.sink:
            path.append(int(self.next_hop[path[-1]]))
        return path

    def route_length(self, node):
        return len(self.route(node)) - 1

    def parents_zero_based(self):
        """Next hops as 0-based indices with -1 for the sink."""
        return np.array([h - 1 for h in self.next_hop[1:]], dtype=np.int64)

    @classmethod
    def from_next_hops(cls, hops, sink, kind="custom"):
        """Build from a ``{node: next_hop}`` mapping over nodes ``1..n``."""
        n = max(max(hops), sink)
        arr = np.zeros(n + 1, dtype=np.int64)
        for i, j in hops.items():
            arr[i] = j
        return cls(kind, arr, int(sink))


def validate_routing(next_hop, sink):
    n = len(next_hop) - 1
    if n < 2:
        raise BadTopology("a network needs at least two nodes")
    if not 1 <= sink <= n or next_hop[sink] != 0:
        raise BadTopology("the sink must be a node with no next hop")
    for start in range(1, n + 1):
        seen = set()
        i = start
        while i != sink:
            if i in seen:
                raise BadTopology(f"routing loop through node {i}")
            seen.add(i)
            j = int(next_hop[i])
            if not 1 <= j <= n:
                raise BadTopology(f"node {i} has no route to the sink")
            i = j


def random_tree(n, seed):
    """Node ``i < n`` links to one of ``i+1..n``, uniformly; node ``n`` is the sink."""
    if n < 2:
        raise BadTopology("a tree needs at least two nodes")
    rng = np.random.default_rng(seed)
    hops = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n):
        hops[i] = rng.integers(i + 1, n + 1)
    return Topology("random_tree", hops, n, (n,))


def grid(rows, cols, sink="corner"):
    """Lattice with shortest-path routing; equal-length ties go to the lowest id.

    ``sink`` is ``"corner"`` (the last id), ``"center"`` or an explicit id.
    """
    if rows * cols < 2:
        raise BadTopology("a grid needs at least two nodes")
    ids = np.arange(1, rows * cols + 1).reshape(rows, cols)
    if sink == "corner":
        sink = int(ids[-1, -1])
    elif sink == "center":
        sink = int(ids[rows // 2, cols // 2])
    sink = int(sink)
    if not 1 <= sink <= rows * cols:
        raise BadTopology(f"sink {sink} is not on the grid")
    G = nx.relabel_nodes(nx.grid_2d_graph(rows, cols), {(r, c): int(ids[r, c]) for r in range(rows) for c in range(cols)})
    dist = nx.single_source_dijkstra_path_length(G, sink)
    hops = np.zeros(rows * cols + 1, dtype=np.int64)
    for i in G.nodes:
        if i == sink:
            continue
        if i not in dist:
            raise BadTopology(f"node {i} is disconnected from the sink")
        hops[i] = min(j for j in G.neighbors(i) if dist.get(j, np.inf) == dist[i] - 1)
    return Topology("grid", hops, sink, (rows, cols))


def build_topology(kind, size=None, sink=None, seed=None):
    """``random_tree`` with ``size = n``, or ``grid`` with ``size = (rows, cols)``."""
    if kind == "random_tree":
        return random_tree(int(size), seed)
    if kind == "grid":
        rows, cols = size
        return grid(int(rows), int(cols), "corner" if sink is None else sink)
    if kind == "single_hop":
        return Topology("single_hop", np.array([0, 2, 0]), 2, (2,))
    raise BadTopology(f"unknown topology kind {kind!r}")


# ------------------------------------------------------------------ kernel

@njit(cache=True, nogil=True)
def _network_kernel(parent, sink, T, B, c_I, c_R, c_T, p_fail, gamma,
                    harvest, gen, x_gen, trial_u, e0,
                    code, omega, alpha, beta, lam, abt, mu_fix, w_fix,
                    eta_mode, eta_param, tx, cens, e_min, e_sum, zeros, trace):
    n = parent.shape[0]
    e = np.full(n, e0, dtype=np.int64)
    pending = np.zeros(n, dtype=np.int64)
    epoch = np.zeros(n, dtype=np.int64)
    cap = 4 * n * n + 16
    in_node = np.empty(cap, dtype=np.int64)
    in_x = np.empty(cap)
    out_node = np.empty(cap, dtype=np.int64)
    out_x = np.empty(cap)
    n_in = 0
    cursor = np.zeros(n, dtype=np.int64)
    half = T // 2
    v_hat = 0.0
    keep_trace = trace.shape[0] > 0
    for t in range(T):
        for i in range(n):
            if i != sink:
                pending[i] += c_I - harvest[t, i]
        n_out = 0
        # delivered-last-slot messages first, then freshly generated ones
        for stage in range(2):
            m_count = n_in if stage == 0 else n
            for m in range(m_count):
                if stage == 0:
                    i = in_node[m]
                    x = in_x[m]
                else:
                    i = m
                    if i == sink or not gen[t, i]:
                        continue
                    x = x_gen[t, i]
                c0 = pending[i] + c_R
                pending[i] = 0
                eb = e[i]
                if code == 0:
                    a = 1
                elif code == 1:
                    a = K.sap_decide(omega[i], alpha[i], beta[i], gamma, eb, x)
                elif code == 2:
                    a = 1 if x >= abt[i, 0] else 0
                else:
                    a = 1 if (w_fix[i, eb] > 0.0 and w_fix[i, eb] * x >= mu_fix[i, eb]) else 0
                nt = 1
                if p_fail > 0.0:
                    u = trial_u[i, cursor[i]]
                    cursor[i] += 1
                    nt = 1 + int(np.floor(np.log(u) / np.log(p_fail)))
                delta = nt * c_T
                e_mid, e_next, ok = K._advance(eb, B, c0, delta, a)
                k = epoch[i]
                if code == 1:
                    eta = K.step_size(eta_mode, eta_param, k)
                    K.sap_step(omega[i], alpha[i], beta[i], lam[i], eb, e_mid, e_next, a, x, eta, gamma)
                elif code == 2:
                    if abt[i, 6] > 0.0:
                        K.abt_observe(abt[i], c0, 0, -delta, a)
                    else:
                        K.abt_observe(abt[i], eb, e_mid, e_next, a)
                    rho = K.abt_current_rho(abt[i])
                    if rho >= 0.0:
                        abt[i, 0] = K.abt_mu_step(abt[i, 0], x, rho, K.step_size(eta_mode, eta_param, k))
                epoch[i] = k + 1
                e[i] = e_next
                if a == 1:
                    tx[i] += 1
                else:
                    cens[i] += 1
                if ok:
                    j = parent[i]
                    if j == sink:
                        arrival = t + 1
                        if arrival >= half and arrival < T:
                            v_hat += gamma ** (arrival - half) * x
                    else:
                        out_node[n_out] = j
                        out_x[n_out] = x
                        n_out += 1
        for i in range(n):
            if i == sink:
                continue
            if e[i] < e_min[i]:
                e_min[i] = e[i]
            e_sum[i] += e[i]
            if e[i] == 0:
                zeros[i] += 1
            if keep_trace:
                trace[t, i] = e[i]
        for m in range(n_out):
            in_node[m] = out_node[m]
            in_x[m] = out_x[m]
        n_in = n_out
    return v_hat


def run_multi_hop(topology, scenario, policy_kind, horizon, seed, gen_prob=0.1,
                  schedule=None, e0=None, keep_trace=False, threshold=None, metered=False):
    """Slotted multi-hop run; ``horizon`` counts global slots.

    Every sensor generates a message with probability ``gen_prob`` per slot.
    A transmitted message moves one hop per slot; the receiving relay pays
    ``c_R`` and decides again (censoring drops the message).  The sink scores
    each arriving message with ``gamma^(slot - T/2)`` over the second half.
    Each node runs its own learner with a local success index.
    """
    kind = policy_kind.lower()
    if kind not in POLICY_CODES:
        raise ValueError(f"multi-hop supports {sorted(POLICY_CODES)}, not {policy_kind!r}")
    code = POLICY_CODES[kind]
    T = int(horizon)
    if T < 2:
        raise ValueError(f"horizon must be at least 2 epochs, got {T}")
    costs = scenario.costs
    B = scenario.B
    n = topology.n_nodes
    sink = topology.sink - 1
    slots = np.arange(T)
    harvest = np.zeros((T, n), dtype=np.int64)
    gen = np.zeros((T, n), dtype=np.bool_)
    x_gen = np.zeros((T, n))
    # a node decides at most once per slot for every node of its subtree
    subtree = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        for j in topology.route(i)[:-1]:
            subtree[j] += 1
    n_trials = T * int(subtree.max()) if costs.p_fail > 0 else 1
    trial_u = np.ones((n, n_trials))
    for i in range(n):
        if i == sink:
            continue
        rng = node_stream(seed, i + 1)
        harvest[:, i] = costs.harvest.sample_slots(rng, slots)
        gen[:, i] = rng.random(T) < gen_prob
        x_gen[:, i] = scenario.importance.sample(rng, T)
        if costs.p_fail > 0:
            trial_u[i] = rng.random(n_trials)

    omega = np.zeros((n, B + 1))
    alpha = np.zeros((n, B + 1))
    beta = np.zeros((n, B + 1))
    lam = np.zeros((n, B + 1))
    abt = np.zeros((n, 7))
    abt[:, 5] = -1.0
    abt[:, 6] = float(metered)
    mu_fix = np.zeros((n, B + 1))
    w_fix = np.ones((n, B + 1))
    if schedule is None:
        schedule = StepSchedule.decaying(0.01)
    if kind == "threshold":
        if threshold is None:
            raise ValueError("threshold policy needs per-node ThresholdPolicy objects")
        for node, pol in threshold.items():
            mu_fix[node - 1], w_fix[node - 1] = pol.mu, pol.w
    mode, param = schedule.code

    tx = np.zeros(n, dtype=np.int64)
    cens = np.zeros(n, dtype=np.int64)
    e_min = np.full(n, B, dtype=np.int64)
    e_sum = np.zeros(n)
    zeros = np.zeros(n, dtype=np.int64)
    trace = np.zeros((T, n), dtype=np.int64) if keep_trace else np.zeros((0, n), dtype=np.int64)
    v_hat = _network_kernel(
        topology.parents_zero_based(), sink, T, B, int(costs.c_I), int(costs.c_R), int(costs.c_T),
        float(costs.p_fail), float(scenario.gamma), harvest, gen, x_gen, trial_u,
        B if e0 is None else int(e0), code, omega, alpha, beta, lam, abt, mu_fix, w_fix,
        mode, param, tx, cens, e_min, e_sum, zeros, trace)
    mask = np.arange(n) != sink
    out = SimulationOutcome(
        v_hat=float(v_hat), epochs=int(tx.sum() + cens.sum()), seed=seed,
        tx_count=tx[mask], censor_count=cens[mask], battery_min=e_min[mask],
        battery_mean=e_sum[mask] / max(T, 1), frac_battery_zero=zeros[mask] / max(T, 1),
        nodes=np.flatnonzero(mask) + 1,
    )
    if kind == "sap":
        out.learner = [SapState(omega[i], alpha[i], beta[i], lam[i], scenario.gamma, schedule)
                       for i in np.flatnonzero(mask)]
    elif kind == "abt":
        out.learner = []
        for i in np.flatnonzero(mask):
            s = AbtState(schedule=schedule)
            s.load_array(abt[i])
            out.learner.append(s)
    if keep_trace:
        out.battery = trace[:, mask]
    return out
