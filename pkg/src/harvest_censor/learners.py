"""Online learners: SAP, the adaptive balanced transmitter and tabular Q-learning.

Each learner keeps its state in numpy arrays so the simulators can hand them
straight to the compiled epoch loops in ``_kernels``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ConfigError


@dataclass(frozen=True)
class StepSchedule:
    """``decaying(delta)``: eta_k = 1 / (1 + delta k).  ``constant(eta)``: eta_k = eta."""

    kind: str = "decaying"
    value: float = 0.01

    def __post_init__(self):
        if self.kind not in ("decaying", "constant"):
            raise ConfigError(f"unknown step schedule {self.kind!r}")
        if self.value < 0 or (self.kind == "constant" and self.value > 1):
            raise ConfigError(f"step parameter out of range: {self.value!r}")

    @classmethod
    def decaying(cls, delta):
        return cls("decaying", float(delta))

    @classmethod
    def constant(cls, eta):
        return cls("constant", float(eta))

    @property
    def code(self):
        """``(mode, param)`` as understood by the compiled loops."""
        return (K.DECAYING if self.kind == "decaying" else K.CONSTANT, self.value)

    def __call__(self, k):
        if self.kind == "decaying":
            return 1.0 / (1.0 + self.value * k)
        return self.value


# --------------------------------------------------------------------- SAP

@dataclass(eq=False)
class SapState:
    """Sample-based estimates of ``W``, ``E{T_c0 lam}``, ``E{T_c1 lam}`` and ``lam``."""

    omega: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    gamma: float = 0.999
    schedule: StepSchedule = field(default_factory=StepSchedule)
    k: int = 0

    @classmethod
    def zeros(cls, B, gamma=0.999, schedule=None):
        z = lambda: np.zeros(int(B) + 1)
        return cls(z(), z(), z(), z(), gamma, schedule or StepSchedule())

    @property
    def capacity(self):
        return len(self.lam) - 1

    @property
    def mu(self):
        return self.gamma * (self.alpha - self.beta)

    def decide(self, e, x):
        return sap_decide(self, e, x)

    def update(self, e_before, e_mid, e_after, action, x):
        return sap_update(self, e_before, e_mid, e_after, action, x)

    def as_vector(self):
        return np.concatenate([self.omega, self.alpha, self.beta, self.lam])

    def copy(self):
        return copy.deepcopy(self)


def sap_decide(s, e, x):
    """``u(omega(e) x - mu(e))`` with ties transmitting."""
    return int(K.sap_decide(s.omega, s.alpha, s.beta, s.gamma, int(e), float(x)))


def sap_update(s, e_before, e_mid, e_after, action, x, k=None, eta=None):
    """Apply one SAP step in place and return ``s``.

    The step size is ``eta`` if given, else ``s.schedule(k)`` with ``k``
    defaulting to the number of updates applied so far.
    """
    if eta is None:
        eta = s.schedule(s.k if k is None else k)
    K.sap_step(s.omega, s.alpha, s.beta, s.lam, int(e_before), int(e_mid),
               int(e_after), int(action), float(x), float(eta), float(s.gamma))
    s.k += 1
    return s


def shift_matrix(c, B):
    """``T_c`` as a dense matrix: ``(T_c lam)(e) = lam(clip(e - c, B))``."""
    T = np.zeros((B + 1, B + 1))
    T[np.arange(B + 1), np.clip(np.arange(B + 1) - c, 0, B)] = 1.0
    return T


def sap_matrix_step(v, c0, c1, x, eta, gamma):
    """Block-matrix Robbins-Monro step on the stacked vector ``(omega, alpha, beta, lam)``.

    ``v' = v + eta ((N_x v)^+ + M v + wbar_c1)``.  Mirrors the full-update
    case of :func:`sap_update` (transmit and a non-empty battery afterwards)
    and is kept as an independent check of it.
    """
    v = np.asarray(v, dtype=float)
    n = v.size // 4
    B = n - 1
    I = np.eye(n)
    Z = np.zeros((n, n))
    M = np.block([
        [-I, Z, Z, Z],
        [Z, -I, Z, shift_matrix(c0, B)],
        [Z, Z, -I, shift_matrix(c1, B)],
        [Z, gamma * I, Z, -I],
    ])
    N = np.block([
        [Z, Z, Z, Z],
        [Z, Z, Z, Z],
        [Z, Z, Z, Z],
        [x * I, -gamma * I, gamma * I, Z],
    ])
    wbar = np.zeros(4 * n)
    wbar[:n] = (np.arange(n) >= c1).astype(float)
    return v + eta * (np.maximum(N @ v, 0.0) + M @ v + wbar)


# --------------------------------------------------------------------- ABT

@dataclass(eq=False)
class AbtState:
    """Constant importance threshold tracking the balancing quantile.

    ``rho_fixed`` pins rho instead of estimating it from the cost means.
    ``metered`` observes true epoch costs rather than battery differences.
    """

    mu: float = 0.0
    c0_sum: float = 0.0
    c0_n: int = 0
    c1_sum: float = 0.0
    c1_n: int = 0
    schedule: StepSchedule = field(default_factory=StepSchedule)
    k: int = 0
    rho_fixed: float | None = None
    metered: bool = False

    @property
    def c0_mean(self):
        return self.c0_sum / self.c0_n if self.c0_n else float("nan")

    @property
    def c1_mean(self):
        return self.c1_sum / self.c1_n if self.c1_n else float("nan")

    @property
    def rho(self):
        """Current rho, or ``None`` until both cost classes have been seen."""
        if self.rho_fixed is not None:
            return self.rho_fixed
        r = K.abt_rho(self.c0_sum, self.c0_n, self.c1_sum, self.c1_n)
        return None if r < 0 else float(r)

    def decide(self, x):
        return int(x >= self.mu)

    def to_array(self):
        rf = -1.0 if self.rho_fixed is None else float(self.rho_fixed)
        return np.array([self.mu, self.c0_sum, self.c0_n, self.c1_sum, self.c1_n, rf,
                         float(self.metered)])

    def load_array(self, a):
        self.mu = float(a[0])
        self.c0_sum, self.c0_n = float(a[1]), int(a[2])
        self.c1_sum, self.c1_n = float(a[3]), int(a[4])

    def copy(self):
        return copy.deepcopy(self)


def abt_update(s, x, observed_cost_class=None, cost_value=None, k=None, eta=None):
    """Fold an optional cost observation into its running mean, then move ``mu``.

    ``mu <- max(0, mu + eta (rho u(x - mu) - (1 - rho) u(mu - x)))``; the
    threshold is left alone while rho is still undefined.
    """
    if observed_cost_class == 0:
        s.c0_sum += cost_value
        s.c0_n += 1
    elif observed_cost_class == 1:
        s.c1_sum += cost_value
        s.c1_n += 1
    elif observed_cost_class is not None:
        raise ValueError("observed_cost_class must be 0, 1 or None")
    if eta is None:
        eta = s.schedule(s.k if k is None else k)
    rho = s.rho
    if rho is not None:
        s.mu = float(K.abt_mu_step(float(s.mu), float(x), float(rho), float(eta)))
    s.k += 1
    return s


# --------------------------------------------------------------- Q-learning

@dataclass(eq=False)
class QTable:
    """Tabular Q over (battery level, importance bin, action).

    Importance is binned with ``n_bins`` equal-width bins on ``[0, x_max)``
    plus one overflow bin for ``x >= x_max``.
    """

    q: np.ndarray
    x_max: float
    n_bins: int = 100
    alpha: float = 0.2
    epsilon: float = 0.1
    gamma: float = 0.999

    @classmethod
    def zeros(cls, B, mean_x, n_bins=100, alpha=0.2, epsilon=0.1, gamma=0.999):
        return cls(np.zeros((int(B) + 1, n_bins + 1, 2)), 5.0 * mean_x, n_bins, alpha, epsilon, gamma)

    @property
    def width(self):
        return self.x_max / self.n_bins

    def bin(self, x):
        return int(K.q_bin(float(x), self.width, self.n_bins))

    def state(self, e, x):
        return int(e), self.bin(x)

    def copy(self):
        return copy.deepcopy(self)


def q_update(t, s, a, r, s_next):
    """``q(s,a) <- (1 - alpha) q(s,a) + alpha (r + gamma max_a' q(s',a'))``."""
    K.q_step(t.q, s[0], s[1], int(a), float(r), s_next[0], s_next[1], t.alpha, t.gamma)
    return t


def q_decide(t, s, rng):
    """Epsilon-greedy; greedy ties go to transmit."""
    if rng.random() < t.epsilon:
        return int(rng.random() < 0.5)
    return int(K.q_greedy(t.q, s[0], s[1]))
