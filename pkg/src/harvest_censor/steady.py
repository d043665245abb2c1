"""Battery-level Markov chain under a threshold policy and its long-run value."""

from __future__ import annotations

import csv
import math

import numpy as np

from .env import battery_kernel
from .errors import Degenerate
from .mdp import ThresholdPolicy, success_probability


def build_transition_matrix(policy, costs, importance):
    """``P[i, j] = P{e_k = j | e_{k-1} = i}`` under ``policy``.

    Row ``i`` mixes the transmit kernel with weight ``P{transmit | e=i}`` and
    the censor kernel with the complement; under- and overflow mass lands on
    the end columns.
    """
    B = policy.capacity
    p_tx, _ = importance.transmit_stats(policy.w, policy.mu)
    K0 = battery_kernel(costs.pmf(0), B)
    K1 = battery_kernel(costs.pmf(1), B)
    return p_tx[:, None] * K1 + (1.0 - p_tx)[:, None] * K0


def _power_iteration(P, tol, max_steps):
    n = P.shape[0]
    phi = np.full(n, 1.0 / n)
    res = np.inf
    for _ in range(max_steps):
        nxt = phi @ P
        res = np.max(np.abs(nxt - phi))
        phi = nxt
        if res < tol:
            break
    return phi / phi.sum(), res


def stationary_distribution(P, max_power_steps=1_000_000):
    """Stationary vector ``phi`` with ``phi P = phi`` and ``sum(phi) = 1``.

    Solved directly with the normalisation replacing one balance equation.
    Chains with several closed classes make that system singular; they fall
    back to power iteration from the uniform distribution.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        phi = np.linalg.solve(A, rhs)
        if np.all(phi > -1e-12) and np.max(np.abs(phi @ P - phi)) < 1e-10:
            phi = np.maximum(phi, 0.0)
            return phi / phi.sum()
    except np.linalg.LinAlgError:
        pass
    phi, res = _power_iteration(P, 1e-10, max_power_steps)
    if res >= 1e-8:
        raise Degenerate(f"power iteration stalled at residual {res:.3e}")
    return phi


def expected_performance(policy, costs, importance, gamma, phi=None):
    """Long-run discounted value ``sum_e W(e) E{x; transmit | e} phi_e / (1 - gamma)``."""
    if phi is None:
        phi = stationary_distribution(build_transition_matrix(policy, costs, importance))
    _, reward = importance.transmit_stats(policy.w, policy.mu)
    return float(np.dot(policy.w * reward, phi) / (1.0 - gamma))


def balancing_quantile(costs):
    """``rho = cbar1 / (cbar1 - cbar0)``, the censoring fraction giving E{c} = 0."""
    c0, c1 = costs.mean(0), costs.mean(1)
    if c1 <= 0:
        return 0.0
    if c0 >= 0:
        return 1.0
    return c1 / (c1 - c0)


def balanced_threshold(costs, importance):
    """Constant importance threshold making the average energy balance zero.

    Returns 0 when transmitting everything still gains energy and ``inf``
    when even censoring everything loses energy (see :func:`never_balances`).
    """
    if costs.mean(1) <= 0:
        return 0.0
    if costs.mean(0) >= 0:
        return math.inf
    return float(importance.quantile(balancing_quantile(costs)))


def never_balances(costs):
    return costs.mean(0) >= 0


def balanced_policy(mu_bar, costs, capacity):
    return ThresholdPolicy.constant(mu_bar, success_probability(costs, capacity))


def balanced_performance(mu_bar, costs, importance, gamma, capacity):
    """Value of the constant threshold ``mu_bar`` (0 if it never transmits)."""
    if math.isinf(mu_bar):
        return 0.0
    return expected_performance(balanced_policy(mu_bar, costs, capacity), costs, importance, gamma)


def nonselective_performance(costs, importance, gamma, capacity):
    return balanced_performance(0.0, costs, importance, gamma, capacity)


def write_phi_csv(path, phi):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["e", "phi"])
        for e, p in enumerate(phi):
            out.writerow([e, repr(float(p))])
