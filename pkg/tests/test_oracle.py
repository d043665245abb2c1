import numpy as np
import pytest

from conftest import random_small_costs, tabulated
from harvest_censor import (
    EmpiricalImportance,
    ExponentialImportance,
    ScenarioModel,
    ThresholdPolicy,
    TooLarge,
    build_transition_matrix,
    decide,
    stationary_distribution,
    success_probability,
    value_iteration,
)
from harvest_censor.oracle import (
    build_joint_mdp,
    empirical_stationary,
    joint_value_iteration,
    total_variation,
)


def random_instance(seed):
    rng = np.random.default_rng(seed)
    costs = random_small_costs(rng)
    B = int(rng.integers(1, 9))
    n = int(rng.integers(1, 6))
    atoms = np.sort(rng.choice(np.arange(1, 40) / 4, size=n, replace=False))
    probs = rng.dirichlet(np.ones(n))
    gamma = float(rng.choice([0.5, 0.9, 0.99]))
    return costs, B, atoms, probs, gamma


def test_kernel_rows_sum_to_one():
    for seed in range(10):
        costs, B, atoms, probs, _ = random_instance(seed)
        m = build_joint_mdp(costs, B, atoms, probs)
        np.testing.assert_allclose(m.P.sum(axis=2), 1.0, atol=1e-12)


def test_size_guards():
    costs = tabulated({-1: 1.0}, {1: 1.0})
    with pytest.raises(TooLarge):
        build_joint_mdp(costs, 9, [1.0], [1.0])
    with pytest.raises(TooLarge):
        build_joint_mdp(costs, 3, np.arange(1, 7), np.full(6, 1 / 6))


def test_myopic_oracle():
    costs = tabulated({0: 0.5, -1: 0.5}, {2: 0.5, 3: 0.5})
    m = build_joint_mdp(costs, 4, [0.5, 2.0], [0.5, 0.5])
    act, _, _ = joint_value_iteration(m, 0.0)
    w = success_probability(costs, 4)
    np.testing.assert_array_equal(act, (w[:, None] * np.array([0.5, 2.0]) > 0).astype(int))


@pytest.mark.parametrize("seed", range(25))
def test_oracle_agrees_with_threshold_solver(seed):
    costs, B, atoms, probs, gamma = random_instance(seed)
    sc = ScenarioModel(B, costs, EmpiricalImportance(atoms, probs), gamma)
    res = value_iteration(sc, tol=1e-12)
    m = build_joint_mdp(costs, B, atoms, probs)
    act, V, _ = joint_value_iteration(m, gamma)
    pol = res.policy
    for e in range(B + 1):
        for j, x in enumerate(atoms):
            # near-ties are decided by rounding in either solver
            if abs(pol.w[e] * x - pol.mu[e]) > 1e-7:
                assert decide(pol, e, x) == act[e, j], (e, x)
    np.testing.assert_allclose(V @ probs, res.value.lam, atol=1e-9)
    assert np.all(np.diff(V @ probs) >= -1e-9)
    assert np.all(np.diff(V, axis=0) >= -1e-9)


# ------------------------------------------------------------- simulation


def test_recharge_only_concentrates_at_capacity():
    costs = tabulated({-1: 1.0}, {3: 1.0})
    pol = ThresholdPolicy(np.full(6, np.inf), success_probability(costs, 5))
    hist = empirical_stationary(pol, costs, ExponentialImportance(1.0), 10**5, 0, e0=0)
    np.testing.assert_array_equal(hist, [0, 0, 0, 0, 0, 1])


def test_deterministic_cycle():
    # censor recharges by 2, transmitting at the top spends 2: 4 -> 2 -> 4 -> ...
    costs = tabulated({-2: 1.0}, {2: 1.0})
    mu = np.full(5, np.inf)
    mu[4] = 0.0
    pol = ThresholdPolicy(mu, success_probability(costs, 4))
    hist = empirical_stationary(pol, costs, ExponentialImportance(1.0), 10**5, 0, e0=4)
    np.testing.assert_allclose(hist, [0, 0, 0.5, 0, 0.5])


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_histogram_matches_stationary_distribution(seed):
    rng = np.random.default_rng(100 + seed)
    costs = tabulated({-2: 0.5, -1: 0.2, 1: 0.3}, {1: 0.4, 2: 0.4, 4: 0.2})
    B = int(rng.integers(6, 20))
    imp = ExponentialImportance(1.0)
    pol = value_iteration(ScenarioModel(B, costs, imp, 0.99)).policy
    phi = stationary_distribution(build_transition_matrix(pol, costs, imp))
    hist = empirical_stationary(pol, costs, imp, 10**6, seed)
    assert total_variation(hist, phi) < 0.01


def test_total_variation():
    assert total_variation([1, 0], [0, 1]) == 1.0
    assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
