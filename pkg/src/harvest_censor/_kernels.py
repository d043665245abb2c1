"""Compiled inner loops shared by the learner classes and the simulators.

Random draws are made beforehand with numpy generators; everything here is
deterministic given its array inputs.
"""

import numpy as np
from numba import njit

DECAYING = 0
CONSTANT = 1


@njit(cache=True, nogil=True)
def clip_energy(e, B):
    if e < 0:
        return 0
    if e > B:
        return B
    return e


@njit(cache=True, nogil=True)
def step_size(mode, param, k):
    if mode == DECAYING:
        return 1.0 / (1.0 + param * k)
    return param


@njit(cache=True, nogil=True)
def sap_decide(omega, alpha, beta, gamma, e, x):
    return 1 if omega[e] * x - gamma * (alpha[e] - beta[e]) >= 0.0 else 0


@njit(cache=True, nogil=True)
def sap_step(omega, alpha, beta, lam, e_before, e_mid, e_after, action, x, eta, gamma):
    """One SAP update in place.  lam always moves; alpha needs a non-empty
    battery after the epoch; beta and omega additionally need a transmission."""
    B = lam.shape[0] - 1
    c0 = e_before - e_mid
    c1 = e_before - e_after
    new_lam = np.empty_like(lam)
    for e in range(B + 1):
        z = x * omega[e] - gamma * (alpha[e] - beta[e])
        if z < 0.0:
            z = 0.0
        new_lam[e] = (1.0 - eta) * lam[e] + eta * (gamma * alpha[e] + z)
    if e_after > 0:
        for e in range(B + 1):
            alpha[e] = (1.0 - eta) * alpha[e] + eta * lam[clip_energy(e - c0, B)]
        if action == 1:
            for e in range(B + 1):
                beta[e] = (1.0 - eta) * beta[e] + eta * lam[clip_energy(e - c1, B)]
                hit = 1.0 if e >= c1 else 0.0
                omega[e] = (1.0 - eta) * omega[e] + eta * hit
    for e in range(B + 1):
        lam[e] = new_lam[e]


@njit(cache=True, nogil=True)
def abt_rho(c0_sum, c0_n, c1_sum, c1_n):
    """Balancing quantile from running cost means; -1 while undefined."""
    if c0_n == 0 or c1_n == 0:
        return -1.0
    m0 = c0_sum / c0_n
    m1 = c1_sum / c1_n
    if m1 <= 0.0:
        return 0.0
    if m0 >= 0.0:
        return 1.0
    return m1 / (m1 - m0)


@njit(cache=True, nogil=True)
def abt_mu_step(mu, x, rho, eta):
    up = 1.0 if x >= mu else 0.0
    down = 1.0 if mu >= x else 0.0
    mu = mu + eta * (rho * up - (1.0 - rho) * down)
    return mu if mu > 0.0 else 0.0


@njit(cache=True, nogil=True)
def q_bin(x, width, n_bins):
    b = int(x / width)
    return b if b < n_bins else n_bins


@njit(cache=True, nogil=True)
def q_greedy(q, e, b):
    return 1 if q[e, b, 1] >= q[e, b, 0] else 0


@njit(cache=True, nogil=True)
def q_step(q, e, b, a, r, e2, b2, alpha, gamma):
    best = q[e2, b2, 0]
    if q[e2, b2, 1] > best:
        best = q[e2, b2, 1]
    q[e, b, a] = (1.0 - alpha) * q[e, b, a] + alpha * (r + gamma * best)


@njit(cache=True, nogil=True)
def _advance(e, B, c0, delta, a):
    """Return (e_mid, e_next, success) for one epoch."""
    e_mid = clip_energy(e - c0, B)
    if a == 1:
        rest = e - c0 - delta
        return e_mid, clip_energy(rest, B), rest >= 0
    return e_mid, e_mid, False


@njit(cache=True, nogil=True)
def episode_threshold(e0, B, x, c0, delta, mu, w, always, rewards, battery, actions):
    """Fixed threshold policy, or transmit-always when ``always`` is set."""
    e = e0
    for k in range(x.shape[0]):
        if always:
            a = 1
        else:
            a = 1 if (w[e] > 0.0 and w[e] * x[k] >= mu[e]) else 0
        e_mid, e_next, ok = _advance(e, B, c0[k], delta[k], a)
        rewards[k] = x[k] if ok else 0.0
        battery[k] = e_next
        actions[k] = a
        e = e_next
    return e


@njit(cache=True, nogil=True)
def episode_sap(e0, B, x, c0, delta, omega, alpha, beta, lam, gamma,
                eta_mode, eta_param, k0, rewards, battery, actions, mu_log):
    e = e0
    log = mu_log.shape[0] > 0
    for k in range(x.shape[0]):
        if log:
            mu_log[k] = gamma * (alpha[e] - beta[e])
        a = sap_decide(omega, alpha, beta, gamma, e, x[k])
        e_mid, e_next, ok = _advance(e, B, c0[k], delta[k], a)
        eta = step_size(eta_mode, eta_param, k0 + k)
        sap_step(omega, alpha, beta, lam, e, e_mid, e_next, a, x[k], eta, gamma)
        rewards[k] = x[k] if ok else 0.0
        battery[k] = e_next
        actions[k] = a
        e = e_next
    return e


@njit(cache=True, nogil=True)
def abt_observe(state, e_before, e_mid, e_after, action):
    """c0 is seen every epoch, c1 only when transmitting."""
    state[1] += e_before - e_mid
    state[2] += 1.0
    if action == 1:
        state[3] += e_before - e_after
        state[4] += 1.0


@njit(cache=True, nogil=True)
def abt_current_rho(state):
    if state[5] >= 0.0:
        return state[5]
    return abt_rho(state[1], state[2], state[3], state[4])


@njit(cache=True, nogil=True)
def episode_abt(e0, B, x, c0, delta, state, eta_mode, eta_param, k0,
                rewards, battery, actions, mu_log):
    """``state`` = [mu, c0_sum, c0_n, c1_sum, c1_n, rho_fixed, metered], updated in place.

    ``rho_fixed < 0`` means rho is estimated from the running cost means.
    With ``metered`` set the true epoch costs are observed instead of
    battery differences (which are biased by clipping at 0 and B).
    """
    e = e0
    log = mu_log.shape[0] > 0
    for k in range(x.shape[0]):
        if log:
            mu_log[k] = state[0]
        a = 1 if x[k] >= state[0] else 0
        e_mid, e_next, ok = _advance(e, B, c0[k], delta[k], a)
        if state[6] > 0.0:
            abt_observe(state, c0[k], 0, -delta[k], a)
        else:
            abt_observe(state, e, e_mid, e_next, a)
        rho = abt_current_rho(state)
        if rho >= 0.0:
            state[0] = abt_mu_step(state[0], x[k], rho, step_size(eta_mode, eta_param, k0 + k))
        rewards[k] = x[k] if ok else 0.0
        battery[k] = e_next
        actions[k] = a
        e = e_next
    return e


@njit(cache=True, nogil=True)
def episode_q(e0, B, x, c0, delta, explore_u, action_u, q, width, n_bins,
              alpha, epsilon, gamma, rewards, battery, actions):
    e = e0
    pe, pb, pa = -1, 0, 0
    pr = 0.0
    for k in range(x.shape[0]):
        b = q_bin(x[k], width, n_bins)
        if pe >= 0:
            q_step(q, pe, pb, pa, pr, e, b, alpha, gamma)
        if explore_u[k] < epsilon:
            a = 1 if action_u[k] < 0.5 else 0
        else:
            a = q_greedy(q, e, b)
        e_mid, e_next, ok = _advance(e, B, c0[k], delta[k], a)
        r = x[k] if ok else 0.0
        rewards[k] = r
        battery[k] = e_next
        actions[k] = a
        pe, pb, pa, pr = e, b, a, r
        e = e_next
    return e
