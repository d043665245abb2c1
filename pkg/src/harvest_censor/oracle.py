"""Brute-force reference solvers for tiny instances.

Nothing here uses the threshold structure or the battery kernels of the main
solver: the joint (battery, importance) chain is assembled by enumerating
cost outcomes one by one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooLarge

MAX_CAPACITY = 8
MAX_ATOMS = 5


@dataclass(frozen=True, eq=False)
class JointMdp:
    """MDP over states ``(e, j)`` (battery level, importance atom index).

    ``P[a, s, s']`` is the transition kernel, ``R[a, s]`` the expected reward
    ``a W(e) x_j``.  States are ordered ``s = e * n_atoms + j``.
    """

    capacity: int
    atoms: np.ndarray
    atom_probs: np.ndarray
    success: np.ndarray
    P: np.ndarray
    R: np.ndarray

    @property
    def n_atoms(self):
        return len(self.atoms)

    def state(self, e, j):
        return e * self.n_atoms + j


def build_joint_mdp(costs, capacity, atoms, atom_probs):
    """Enumerate the joint chain for costs with finitely supported pmfs."""
    B = int(capacity)
    atoms = np.asarray(atoms, dtype=float)
    probs = np.asarray(atom_probs, dtype=float)
    if B > MAX_CAPACITY or len(atoms) > MAX_ATOMS:
        raise TooLarge(f"oracle limited to B <= {MAX_CAPACITY} and <= {MAX_ATOMS} atoms")
    if B < 0 or len(atoms) == 0:
        raise ValueError("need B >= 0 and at least one importance atom")
    n = len(atoms)
    pmfs = [costs.pmf(0), costs.pmf(1)]
    outcomes = [list(zip(p.support.tolist(), p.probs.tolist())) for p in pmfs]

    W = np.zeros(B + 1)
    for e in range(B + 1):
        W[e] = sum(q for c, q in outcomes[1] if c <= e)

    S = (B + 1) * n
    P = np.zeros((2, S, S))
    R = np.zeros((2, S))
    for a in (0, 1):
        for e in range(B + 1):
            nxt = np.zeros(B + 1)
            for c, q in outcomes[a]:
                nxt[max(0, min(e - c, B))] += q
            for j in range(n):
                s = e * n + j
                P[a, s] = np.kron(nxt, probs)
                R[a, s] = a * W[e] * atoms[j]
    return JointMdp(B, atoms, probs, W, P, R)


def joint_value_iteration(m, gamma, tol=1e-12, max_iter=10_000_000):
    """Bellman backups on the joint chain until the sup-norm change is below ``tol``.

    Returns ``(actions, V, Q)``; ``actions`` and ``V`` are shaped ``(B+1, n_atoms)``
    and ``Q`` ``(2, B+1, n_atoms)``.  The greedy action
    transmits when its Q-value is at least the censoring one, except that a
    transmission with zero expected reward is never chosen.
    """
    V = np.zeros(m.P.shape[1])
    for _ in range(max_iter):
        Q = m.R + gamma * (m.P @ V)
        new = Q.max(axis=0)
        diff = np.max(np.abs(new - V))
        V = new
        if diff < tol:
            break
    Q = m.R + gamma * (m.P @ V)
    act = ((Q[1] >= Q[0]) & (m.R[1] > 0)).astype(int)
    shape = (m.capacity + 1, m.n_atoms)
    return act.reshape(shape), V.reshape(shape), Q.reshape((2,) + shape)


def empirical_stationary(policy, costs, importance, epochs, seed, e0=None, burn_in=0.1):
    """Normalised battery-level histogram of a long run after discarding ``burn_in``."""
    from .env import ScenarioModel
    from .sim import run_single_hop

    B = policy.capacity
    scenario = ScenarioModel(B, costs, importance, 0.5)
    out = run_single_hop(scenario, policy, int(epochs), seed, e0=e0, keep_trace=True)
    start = int(burn_in * epochs)
    hist = np.bincount(out.battery[start:], minlength=B + 1).astype(float)
    return hist / hist.sum()


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
