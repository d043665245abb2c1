"""Optimal threshold censoring policy by value iteration.

The optimal rule transmits iff ``W(e) x >= mu(e)`` where ``W(e) = P{c <= e | a=1}``
is the success probability and the threshold solves::

    mu(e)     = gamma * (E{lam(clip(e - c)) | a=0} - E{lam(clip(e - c)) | a=1})
    lam(e)    = gamma * E{lam(clip(e - c)) | a=0} + E{(W(e) x - mu(e))^+}
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .env import battery_kernel
from .errors import NoConvergence


@dataclass(frozen=True, eq=False)
class ThresholdPolicy:
    """Energy-dependent threshold ``mu(e)`` with success probability ``w(e)``.

    Ties ``w(e) x == mu(e)`` transmit; levels with ``w(e) == 0`` never do.
    """

    mu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if mu.shape != w.shape or mu.ndim != 1:
            raise ValueError("mu and w must be 1-d arrays of equal length")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "w", w)

    @property
    def capacity(self):
        return len(self.mu) - 1

    @classmethod
    def constant(cls, mu_bar, w):
        """Energy-independent importance threshold ``mu_bar`` (balanced policy)."""
        w = np.asarray(w, dtype=float)
        if np.isinf(mu_bar):
            return cls(np.full(w.shape, np.inf), w)
        return cls(mu_bar * w, w)

    @classmethod
    def nonselective(cls, w):
        w = np.asarray(w, dtype=float)
        return cls(np.zeros_like(w), w)

    def decide(self, e, x):
        return decide(self, e, x)

    @property
    def importance_threshold(self):
        """``mu(e) / w(e)``, infinite where ``w(e) == 0``."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.w > 0, self.mu / np.where(self.w > 0, self.w, 1.0), np.inf)


@dataclass(frozen=True, eq=False)
class ReducedValue:
    """Expected discounted reward ``lam(e)`` with the importance integrated out."""

    lam: np.ndarray


class ValueIterationResult(NamedTuple):
    policy: ThresholdPolicy
    value: ReducedValue
    iterations: int
    residual: float
    diffs: np.ndarray


def success_probability(costs, B):
    """``w(e) = P{c <= e | a=1}`` for ``e = 0..B``."""
    return np.clip(costs.pmf(1).cdf(np.arange(int(B) + 1)), 0.0, 1.0)


def decide(policy, e, x):
    """Transmit (1) iff ``w(e) > 0`` and ``w(e) * x >= mu(e)``."""
    w = policy.w[e]
    mu = policy.mu[e]
    out = (w > 0) & (w * np.asarray(x) >= mu)
    return out.astype(int) if np.ndim(out) else int(out)


def _kernels(scenario):
    B = scenario.B
    return (
        battery_kernel(scenario.costs.pmf(0), B),
        battery_kernel(scenario.costs.pmf(1), B),
    )


def bellman_operator(scenario, kernels=None, w=None):
    """Return ``T`` mapping ``lam_{l-1}`` to ``(mu_l, lam_l)``."""
    K0, K1 = kernels if kernels is not None else _kernels(scenario)
    if w is None:
        w = success_probability(scenario.costs, scenario.B)
    gamma = scenario.gamma
    imp = scenario.importance

    def T(lam):
        keep = K0 @ lam
        mu = gamma * (keep - K1 @ lam)
        return mu, gamma * keep + imp.expected_excess(w, mu)

    return T


def value_iteration(scenario, tol=1e-6, max_iter=1_000_000):
    """Solve for the optimal threshold policy starting from ``lam = 0``.

    Iterates until the sup-norm change of ``lam`` drops below ``tol``; the
    returned ``diffs`` holds that change for every iteration.
    """
    if scenario.B < 1:
        raise ValueError("value iteration needs a battery capacity B >= 1")
    w = success_probability(scenario.costs, scenario.B)
    T = bellman_operator(scenario, w=w)
    lam = np.zeros(scenario.B + 1)
    diffs = []
    diff = np.inf
    it = 0
    while it < max_iter:
        it += 1
        _, new = T(lam)
        diff = float(np.max(np.abs(new - lam)))
        diffs.append(diff)
        lam = new
        if diff < tol:
            break
    else:
        raise NoConvergence(it, diff, tol)
    mu, _ = T(lam)
    return ValueIterationResult(ThresholdPolicy(mu, w), ReducedValue(lam), it, diff, np.array(diffs))


def write_policy_csv(path, policy, value=None):
    """Write the ``e, mu, w, lambda`` table."""
    lam = value.lam if value is not None else np.full(len(policy.mu), np.nan)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["e", "mu", "w", "lambda"])
        for e, (m, w, l) in enumerate(zip(policy.mu, policy.w, lam)):
            out.writerow([e, repr(float(m)), repr(float(w)), repr(float(l))])


def read_policy_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    mu = np.array([float(r["mu"]) for r in rows])
    w = np.array([float(r["w"]) for r in rows])
    lam = np.array([float(r["lambda"]) for r in rows])
    return ThresholdPolicy(mu, w), ReducedValue(lam)
