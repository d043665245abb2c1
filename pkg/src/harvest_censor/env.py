"""Stochastic environment of an energy-harvesting sensor node.

Energy is measured in integer units.  One decision epoch spans ``n_S`` slots
and its net cost given the action ``a`` is::

    c = n_S * c_I + c_R - b + a * n_T * c_T

where ``b`` is the energy harvested during the epoch and ``n_T`` the number of
transmission trials (retransmit until success).  The battery evolves as
``e' = clip(e - c, B)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import signal

from .errors import ConfigError

PMF_TAIL_TOL = 1e-9
_TERM_TOL = 1e-14


def clip(e, B):
    """Project an energy value (or array) onto ``[0, B]``."""
    if np.ndim(e) == 0:
        return int(max(0, min(int(e), int(B))))
    return np.clip(e, 0, B)


# ---------------------------------------------------------------------------
# integer probability mass functions


@dataclass(frozen=True, eq=False)
class Pmf:
    """Distribution on the integers ``offset, offset + 1, ...``."""

    offset: int
    probs: np.ndarray

    @classmethod
    def point(cls, value):
        return cls(int(value), np.ones(1))

    @classmethod
    def from_dict(cls, table):
        keys = sorted(int(k) for k in table)
        probs = np.zeros(keys[-1] - keys[0] + 1)
        for k, p in table.items():
            probs[int(k) - keys[0]] += p
        return cls(keys[0], probs)

    def to_dict(self, atol=0.0):
        return {int(v): float(p) for v, p in zip(self.support, self.probs) if p > atol}

    @property
    def support(self):
        return np.arange(self.offset, self.offset + len(self.probs))

    @property
    def total(self):
        return float(self.probs.sum())

    def mean(self):
        return float(np.dot(self.support, self.probs) / self.probs.sum())

    def var(self):
        m = self.mean()
        return float(np.dot((self.support - m) ** 2, self.probs) / self.probs.sum())

    @cached_property
    def _cum(self):
        return np.cumsum(self.probs)

    @cached_property
    def _rcum(self):
        return np.cumsum(self.probs[::-1])[::-1]

    def prob(self, v):
        idx = np.asarray(v) - self.offset
        inside = (idx >= 0) & (idx < len(self.probs))
        out = np.where(inside, self.probs[np.clip(idx, 0, len(self.probs) - 1)], 0.0)
        return out if out.ndim else float(out)

    def cdf(self, v):
        """P{c <= v}."""
        idx = np.asarray(v) - self.offset
        n = len(self.probs)
        out = np.where(idx < 0, 0.0, np.where(idx >= n, 1.0, self._cum[np.clip(idx, 0, n - 1)]))
        return out if out.ndim else float(out)

    def sf(self, v):
        """P{c >= v}, summed from the upper tail for accuracy."""
        idx = np.asarray(v) - self.offset
        n = len(self.probs)
        out = np.where(idx <= 0, 1.0, np.where(idx >= n, 0.0, self._rcum[np.clip(idx, 0, n - 1)]))
        return out if out.ndim else float(out)

    def shift(self, k):
        return Pmf(self.offset + int(k), self.probs)

    def negate(self):
        return Pmf(-(self.offset + len(self.probs) - 1), self.probs[::-1].copy())

    def convolve(self, other):
        probs = signal.convolve(self.probs, other.probs)
        return Pmf(self.offset + other.offset, np.maximum(probs, 0.0))

    def trim(self, tol):
        """Drop outer support points whose cumulated mass per side is <= tol."""
        lo = int(np.searchsorted(self._cum, tol, side="right"))
        hi = len(self.probs) - int(np.searchsorted(self._rcum[::-1], tol, side="right"))
        lo = min(lo, hi - 1) if hi > 0 else 0
        hi = max(hi, lo + 1)
        return Pmf(self.offset + lo, self.probs[lo:hi].copy())

    def normalized(self):
        return Pmf(self.offset, self.probs / self.probs.sum())

    def sample(self, rng, size=None):
        return self.offset + rng.choice(len(self.probs), size=size, p=self.probs / self.probs.sum())


def _mixture(terms):
    lo = min(p.offset for _, p in terms)
    hi = max(p.offset + len(p.probs) for _, p in terms)
    out = np.zeros(hi - lo)
    for weight, p in terms:
        out[p.offset - lo:p.offset - lo + len(p.probs)] += weight * p.probs
    return Pmf(lo, out)


def battery_kernel(pmf, B):
    """Matrix ``K[e, j] = P{clip(e - c, B) = j}`` for ``c ~ pmf``."""
    B = int(B)
    if B == 0:
        return np.ones((1, 1))
    e = np.arange(B + 1)
    K = pmf.prob(e[:, None] - e[None, :])
    K[:, 0] = pmf.sf(e)          # c >= e empties the battery
    K[:, B] = pmf.cdf(e - B)     # c <= e - B saturates it
    return K


# ---------------------------------------------------------------------------
# importance


class ImportanceModel:
    """Distribution of the message importance ``x >= 0``."""

    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def h(self, alpha):
        """E{(x - alpha)^+}."""
        raise NotImplementedError

    def g(self, alpha):
        """E{x u(x - alpha)} with u(0) = 1."""
        raise NotImplementedError

    @property
    def mean(self):
        raise NotImplementedError

    def expected_excess(self, w, mu):
        """E{(w x - mu)^+}, elementwise over arrays ``w`` and ``mu``."""
        raise NotImplementedError

    def transmit_stats(self, w, mu):
        """Probability and reward mass of the event ``w > 0 and w x >= mu``.

        Returns ``(P{transmit}, E{x; transmit})``; the same tie rule as
        :func:`harvest_censor.mdp.decide`.
        """
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def stats(self, alpha):
        return float(self.cdf(alpha)), float(self.h(alpha)), float(self.g(alpha))


@dataclass(frozen=True)
class ExponentialImportance(ImportanceModel):
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("exponential importance needs a positive mean")

    @property
    def mean(self):
        return self.scale

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-np.maximum(x, 0) / self.scale), 0.0)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(q >= 1, np.inf, -self.scale * np.log1p(-np.clip(q, 0, 1)))
        return np.maximum(out, 0.0)

    def h(self, alpha):
        a = np.asarray(alpha, dtype=float)
        return np.where(a > 0, self.scale * np.exp(-np.maximum(a, 0) / self.scale), self.scale - a)

    def g(self, alpha):
        a = np.maximum(np.asarray(alpha, dtype=float), 0.0)
        tail = np.exp(-a / self.scale)
        # an infinite threshold leaves nothing in the tail (avoid inf * 0)
        return np.where(tail > 0, (self.scale + np.where(tail > 0, a, 0.0)) * tail, 0.0)

    def expected_excess(self, w, mu):
        w, mu = np.broadcast_arrays(np.asarray(w, float), np.asarray(mu, float))
        out = np.maximum(-mu, 0.0)
        pos = w > 0
        t = np.where(pos, mu / np.where(pos, w, 1.0), 0.0)
        out = np.where(pos, w * self.h(t), out)
        return out

    def transmit_stats(self, w, mu):
        w, mu = np.broadcast_arrays(np.asarray(w, float), np.asarray(mu, float))
        pos = w > 0
        t = np.maximum(np.where(pos, mu / np.where(pos, w, 1.0), 0.0), 0.0)
        tail = np.exp(-t / self.scale)
        p = np.where(pos, tail, 0.0)
        r = np.where(pos & (tail > 0), (self.scale + np.where(tail > 0, t, 0.0)) * tail, 0.0)
        return p, r

    def sample(self, rng, size=None):
        return rng.exponential(self.scale, size)


@dataclass(frozen=True, eq=False)
class EmpiricalImportance(ImportanceModel):
    """Finite distribution given as ``values`` with probabilities ``probs``."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or len(v) == 0:
            raise ConfigError("empirical importance needs matching 1-d values/probs")
        if np.any(v < 0) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError("empirical importance: values >= 0, probs >= 0 summing to 1")
        order = np.argsort(v, kind="stable")
        object.__setattr__(self, "values", v[order])
        object.__setattr__(self, "probs", p[order])

    @classmethod
    def from_dict(cls, table):
        items = sorted(table.items())
        return cls(np.array([k for k, _ in items], float), np.array([p for _, p in items], float))

    @property
    def mean(self):
        return float(np.dot(self.values, self.probs))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return (self.probs * (self.values <= x[..., None])).sum(-1)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum, q - 1e-12, side="left")
        vals = np.append(self.values, np.inf)
        return np.where(q > 1, np.inf, vals[np.minimum(idx, len(self.values))])

    def h(self, alpha):
        a = np.asarray(alpha, dtype=float)
        return (self.probs * np.maximum(self.values - a[..., None], 0.0)).sum(-1)

    def g(self, alpha):
        a = np.asarray(alpha, dtype=float)
        return (self.probs * self.values * (self.values >= a[..., None])).sum(-1)

    def expected_excess(self, w, mu):
        w, mu = np.broadcast_arrays(np.asarray(w, float), np.asarray(mu, float))
        return (self.probs * np.maximum(w[..., None] * self.values - mu[..., None], 0.0)).sum(-1)

    def transmit_stats(self, w, mu):
        w, mu = np.broadcast_arrays(np.asarray(w, float), np.asarray(mu, float))
        tx = (w[..., None] > 0) & (w[..., None] * self.values >= mu[..., None])
        return (self.probs * tx).sum(-1), (self.probs * self.values * tx).sum(-1)

    def sample(self, rng, size=None):
        return rng.choice(self.values, size=size, p=self.probs)


def importance_stats(model, alpha):
    """Return ``(F_X(alpha), h(alpha), g(alpha))``."""
    return model.stats(alpha)


# ---------------------------------------------------------------------------
# harvesting and costs


@dataclass(frozen=True)
class Regime:
    """One segment of a periodic harvesting schedule; ``None`` keeps the base value."""

    slots: int
    p: float | None = None
    m_b: float | None = None
    e_H: int | None = None


@dataclass(frozen=True)
class HarvestModel:
    """Per-slot energy income.

    ``per_slot_geometric``: with probability ``p`` a slot harvests a geometric
    amount on {1, 2, ...} with mean ``m_b``.  ``bernoulli_fixed``: with
    probability ``p`` a slot harvests exactly ``e_H``.
    """

    kind: str = "per_slot_geometric"
    p: float = 0.0
    m_b: float = 1.0
    e_H: int = 0
    schedule: tuple = ()

    def __post_init__(self):
        if self.kind not in ("per_slot_geometric", "bernoulli_fixed"):
            raise ConfigError(f"unknown harvest kind {self.kind!r}")
        for reg in (self, *self.schedule):
            p = reg.p if reg.p is not None else self.p
            if not 0.0 <= p <= 1.0:
                raise ConfigError("harvest probability must lie in [0, 1]")
            if reg.m_b is not None and reg.m_b < 1:
                raise ConfigError("harvest.m_b must be >= 1 (amount support starts at 1)")
            if reg.e_H is not None and (int(reg.e_H) != reg.e_H or reg.e_H < 0):
                raise ConfigError("harvest.e_H must be a nonnegative integer")
        if any(r.slots <= 0 for r in self.schedule):
            raise ConfigError("schedule durations must be positive")

    @property
    def stationary(self):
        return not self.schedule

    @property
    def period(self):
        return sum(r.slots for r in self.schedule)

    def regime(self, i):
        """Stationary model of the ``i``-th schedule segment."""
        r = self.schedule[i]
        return HarvestModel(
            self.kind,
            self.p if r.p is None else r.p,
            self.m_b if r.m_b is None else r.m_b,
            self.e_H if r.e_H is None else r.e_H,
        )

    def mean_per_slot(self):
        if self.kind == "per_slot_geometric":
            return self.p * self.m_b
        return self.p * self.e_H

    def slot_pmf(self):
        """Pmf of the harvest of a single slot (stationary part only)."""
        if self.p == 0.0:
            return Pmf.point(0)
        if self.kind == "bernoulli_fixed":
            return Pmf.from_dict({0: 1 - self.p, self.e_H: self.p}) if self.e_H else Pmf.point(0)
        theta = 1.0 / self.m_b
        if theta >= 1.0:
            return Pmf.from_dict({0: 1 - self.p, 1: self.p})
        kmax = max(1, int(math.ceil(math.log(_TERM_TOL / self.p) / math.log1p(-theta))))
        k = np.arange(1, kmax + 1)
        probs = np.empty(kmax + 1)
        probs[0] = 1 - self.p
        probs[1:] = self.p * theta * np.exp((k - 1) * math.log1p(-theta))
        return Pmf(0, probs)

    def slot_params(self, slots):
        """Per-slot ``(p, amount)`` arrays honouring the periodic schedule."""
        slots = np.asarray(slots)
        base_amount = self.m_b if self.kind == "per_slot_geometric" else self.e_H
        if not self.schedule:
            return np.full(slots.shape, self.p), np.full(slots.shape, base_amount, dtype=float)
        bounds = np.cumsum([r.slots for r in self.schedule])
        idx = np.searchsorted(bounds, slots % bounds[-1], side="right")
        regs = [self.regime(i) for i in range(len(self.schedule))]
        p = np.array([r.p for r in regs])[idx]
        if self.kind == "per_slot_geometric":
            amount = np.array([r.m_b for r in regs], dtype=float)[idx]
        else:
            amount = np.array([r.e_H for r in regs], dtype=float)[idx]
        return p, amount

    def sample_slots(self, rng, slots):
        slots = np.asarray(slots)
        p, amount = self.slot_params(slots)
        coin = rng.random(slots.shape) < p
        if self.kind == "per_slot_geometric":
            amt = rng.geometric(1.0 / amount)
        else:
            amt = amount.astype(np.int64)
        return np.where(coin, amt, 0).astype(np.int64)


@dataclass(frozen=True)
class CostSample:
    c0: int
    delta: int | None
    b: int

    @property
    def total(self):
        return self.c0 + (self.delta or 0)


@dataclass
class EpochDraws:
    """Vectorised epoch costs: ``c0`` always, ``delta`` paid only on transmit."""

    c0: np.ndarray
    delta: np.ndarray
    b: np.ndarray
    n_slots: np.ndarray


@dataclass(frozen=True)
class CostModel:
    """Decomposed per-epoch energy cost.

    ``m_S`` is the mean number of slots per epoch (geometric on {1, 2, ...});
    set ``fixed_slots`` for a deterministic ``n_S = m_S``.
    """

    c_I: int = 0
    c_R: int = 0
    c_T: int = 1
    p_fail: float = 0.0
    m_S: float = 1.0
    harvest: HarvestModel = field(default_factory=HarvestModel)
    fixed_slots: bool = False

    def __post_init__(self):
        for name in ("c_I", "c_R", "c_T"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ConfigError(f"cost.{name} must be a nonnegative integer, got {v!r}")
        if not 0.0 <= self.p_fail < 1.0:
            raise ConfigError("cost.p_fail must lie in [0, 1)")
        if self.m_S < 1 or (self.fixed_slots and int(self.m_S) != self.m_S):
            raise ConfigError("cost.m_S must be >= 1 (integer when slots are fixed)")

    @property
    def stationary(self):
        return self.harvest.stationary

    def regime(self, i):
        return replace(self, harvest=self.harvest.regime(i))

    def mean(self, action):
        """Analytic E{c | a}."""
        c0 = self.m_S * (self.c_I - self.harvest.mean_per_slot()) + self.c_R
        if action:
            return c0 + self.c_T / (1.0 - self.p_fail)
        return c0

    @property
    def cbar0(self):
        return self.mean(0)

    @property
    def cbar1(self):
        return self.mean(1)

    @cached_property
    def _pmf0(self):
        per_slot = self.harvest.slot_pmf().negate().shift(self.c_I)
        if self.fixed_slots or self.m_S == 1:
            acc = per_slot
            for _ in range(int(self.m_S) - 1):
                acc = acc.convolve(per_slot).trim(_TERM_TOL)
        else:
            s = 1.0 / self.m_S
            terms, conv, n, tail = [], per_slot, 1, 1.0
            while tail > _TERM_TOL:
                weight = s * (1 - s) ** (n - 1)
                terms.append((weight, conv))
                tail -= weight
                n += 1
                conv = conv.convolve(per_slot).trim(_TERM_TOL)
            acc = _mixture(terms)
        return acc.trim(PMF_TAIL_TOL / 20).normalized().shift(self.c_R)

    @cached_property
    def _pmf_delta(self):
        if self.c_T == 0:
            return Pmf.point(0)
        if self.p_fail == 0.0:
            return Pmf.point(self.c_T)
        nmax = max(1, int(math.ceil(math.log(_TERM_TOL) / math.log(self.p_fail))))
        n = np.arange(1, nmax + 1)
        probs = np.zeros(self.c_T * (nmax - 1) + 1)
        probs[(n - 1) * self.c_T] = (1 - self.p_fail) * self.p_fail ** (n - 1)
        return Pmf(self.c_T, probs)

    @cached_property
    def _pmf1(self):
        return self._pmf0.convolve(self._pmf_delta).trim(PMF_TAIL_TOL / 20).normalized()

    def pmf(self, action):
        if not self.stationary:
            raise ConfigError("exact cost pmf requires a stationary harvest (empty schedule)")
        return self._pmf1 if action else self._pmf0

    def sample(self, action, rng, slot0=0):
        d = self.sample_epochs(rng, 1, slot0)
        return CostSample(int(d.c0[0]), int(d.delta[0]) if action else None, int(d.b[0]))

    def sample_epochs(self, rng, n, slot0=0):
        if self.fixed_slots:
            n_s = np.full(n, int(self.m_S), dtype=np.int64)
        else:
            n_s = rng.geometric(1.0 / self.m_S, n).astype(np.int64)
        harvest = self.harvest.sample_slots(rng, slot0 + np.arange(n_s.sum()))
        starts = np.concatenate(([0], np.cumsum(n_s)[:-1]))
        b = np.add.reduceat(harvest, starts) if n else np.zeros(0, np.int64)
        c0 = n_s * self.c_I + self.c_R - b
        n_t = rng.geometric(1.0 - self.p_fail, n).astype(np.int64)
        return EpochDraws(c0.astype(np.int64), n_t * self.c_T, b, n_s)


@dataclass(frozen=True, eq=False)
class TabulatedCosts:
    """Cost model given directly by the two conditional pmfs of ``c``.

    Sampling draws ``c | a=0`` and ``c | a=1`` independently and reports
    ``delta`` as their difference, so only the conditional marginals are
    meaningful.
    """

    pmf0: Pmf
    pmf1: Pmf
    stationary: bool = True

    def pmf(self, action):
        return self.pmf1 if action else self.pmf0

    def mean(self, action):
        return self.pmf(action).mean()

    @property
    def cbar0(self):
        return self.mean(0)

    @property
    def cbar1(self):
        return self.mean(1)

    def sample(self, action, rng, slot0=0):
        d = self.sample_epochs(rng, 1, slot0)
        return CostSample(int(d.c0[0]), int(d.delta[0]) if action else None, 0)

    def sample_epochs(self, rng, n, slot0=0):
        c0 = self.pmf0.sample(rng, n).astype(np.int64)
        c1 = self.pmf1.sample(rng, n).astype(np.int64)
        return EpochDraws(c0, c1 - c0, np.zeros(n, np.int64), np.ones(n, np.int64))


def sample_epoch(model, action, rng, slot0=0):
    """Draw one epoch's :class:`CostSample`."""
    return model.sample(action, rng, slot0)


def cost_pmf(model, action):
    """Exact pmf of ``c | a`` (tail mass below 1e-9, renormalised)."""
    return model.pmf(action)


@dataclass(frozen=True)
class ScenarioModel:
    """Battery capacity, costs, importance and discount of one node."""

    capacity: int
    costs: CostModel
    importance: ImportanceModel = field(default_factory=ExponentialImportance)
    gamma: float = 0.999

    def __post_init__(self):
        if int(self.capacity) != self.capacity or self.capacity < 0:
            raise ConfigError("battery.capacity must be a nonnegative integer")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")

    @property
    def B(self):
        return int(self.capacity)

    def replace(self, **changes):
        return replace(self, **changes)
