import numpy as np
import pytest
from scipy import stats

from conftest import tabulated
from harvest_censor import (
    AbtState,
    CostModel,
    ExponentialImportance,
    HarvestModel,
    QTable,
    Regime,
    SapState,
    ScenarioModel,
    StepSchedule,
    ThresholdPolicy,
    run_non_stationary,
    run_single_hop,
    simulate_replications,
    value_iteration,
)
from harvest_censor.sim import discounted_window, replicate, summarize, worker_count


def free_scenario(B=10, gamma=0.99):
    return ScenarioModel(B, tabulated({0: 1.0}, {0: 1.0}), ExponentialImportance(1.0), gamma)


def test_free_energy_window_value():
    K, g = 400, 0.99
    out = run_single_hop(free_scenario(gamma=g), "ns", K, 0, x=np.ones(K))
    assert out.v_hat == pytest.approx((1 - g ** (K // 2)) / (1 - g), rel=1e-12)


@pytest.mark.parametrize("K", [0, 1])
def test_short_horizon_rejected(K):
    with pytest.raises(ValueError):
        run_single_hop(free_scenario(), "ns", K, 0)


def test_discounted_window():
    assert discounted_window([9.0, 9.0, 1.0, 2.0], 0.5) == pytest.approx(2.0)
    assert discounted_window([9.0, 9.0, 1.0, 2.0, 7.0], 0.5, horizon=4) == pytest.approx(2.0)


def test_same_seed_same_outcome(fig8_scenario):
    pol = value_iteration(fig8_scenario).policy
    a = run_single_hop(fig8_scenario, pol, 20_000, 3, keep_trace=True)
    b = run_single_hop(fig8_scenario, pol, 20_000, 3, keep_trace=True)
    assert a.v_hat == b.v_hat
    np.testing.assert_array_equal(a.battery, b.battery)
    c = run_single_hop(fig8_scenario, pol, 20_000, 4)
    assert c.v_hat != a.v_hat


@pytest.mark.parametrize("policy", [
    "ns",
    SapState.zeros(100, 0.999, StepSchedule.decaying(0.01)),
    AbtState(schedule=StepSchedule.decaying(0.01)),
    AbtState(schedule=StepSchedule.decaying(0.01), metered=True),
    QTable.zeros(100, 2.0),
])
def test_energy_accounting_audit(fig8_scenario, policy):
    out = run_single_hop(fig8_scenario, policy, 30_000, 5, audit=True, keep_trace=True)
    assert 0 <= out.battery.min() and out.battery.max() <= fig8_scenario.B
    assert out.total_tx + out.total_censor == 30_000


def test_optimal_policy_audit(fig8_scenario):
    pol = value_iteration(fig8_scenario).policy
    run_single_hop(fig8_scenario, pol, 30_000, 6, audit=True)


def test_rewards_only_on_successful_transmissions(fig8_scenario):
    out = run_single_hop(fig8_scenario, "ns", 5000, 1, keep_trace=True)
    paid = out.rewards > 0
    assert np.all(out.actions[paid] == 1)
    np.testing.assert_array_equal(out.rewards[paid], out.importance[paid])


def test_learner_argument_not_mutated(fig8_scenario):
    sap = SapState.zeros(100, 0.999)
    abt = AbtState()
    q = QTable.zeros(100, 2.0)
    for learner in (sap, abt, q):
        before = learner.copy()
        out = run_single_hop(fig8_scenario, learner, 5000, 0)
        assert out.learner is not learner
        if isinstance(learner, SapState):
            np.testing.assert_array_equal(learner.as_vector(), before.as_vector())
            assert learner.k == 0 and out.learner.k == 5000
        elif isinstance(learner, AbtState):
            assert learner.mu == before.mu and learner.c0_n == 0
        else:
            np.testing.assert_array_equal(learner.q, before.q)


@pytest.mark.parametrize("learner", [SapState.zeros(100, 0.999, StepSchedule.decaying(0.01)),
                                     AbtState(schedule=StepSchedule.decaying(0.01))])
def test_snapshots_do_not_change_the_run(fig8_scenario, learner):
    plain = run_single_hop(fig8_scenario, learner, 5000, 2, keep_trace=True)
    snap = run_single_hop(fig8_scenario, learner, 5000, 2, keep_trace=True, snapshot_every=1000)
    np.testing.assert_array_equal(plain.battery, snap.battery)
    assert [k for k, _ in snap.snapshots] == [1000, 2000, 3000, 4000, 5000]
    last = snap.snapshots[-1][1]
    if isinstance(last, SapState):
        np.testing.assert_array_equal(last.as_vector(), plain.learner.as_vector())
    else:
        assert last.mu == plain.learner.mu
    assert snap.snapshots[0][1] is not snap.snapshots[1][1]


def test_mu_log(fig8_scenario):
    out = run_single_hop(fig8_scenario, AbtState(mu=0.7, rho_fixed=0.5), 100, 0, log_mu=True)
    assert out.mu_trace.shape == (100,) and out.mu_trace[0] == 0.7


def test_horizon_windows(fig8_scenario):
    out = run_single_hop(fig8_scenario, "ns", 4000, 0, keep_trace=True, horizons=(1000, 4000))
    assert out.v_hat_at[4000] == out.v_hat
    assert out.v_hat_at[1000] == pytest.approx(discounted_window(out.rewards[:1000], 0.999))


def test_threshold_policy_never_transmits_without_success():
    sc = ScenarioModel(5, tabulated({-1: 1.0}, {9: 1.0}), ExponentialImportance(1.0), 0.9)
    pol = ThresholdPolicy(np.zeros(6), np.zeros(6))
    out = run_single_hop(sc, pol, 100, 0)
    assert out.total_tx == 0 and out.v_hat == 0.0


# ----------------------------------------------------------- non-stationary


def test_single_regime_schedule_matches_stationary():
    base = dict(c_R=3, c_T=5, p_fail=0.3)
    flat = ScenarioModel(60, CostModel(harvest=HarvestModel("bernoulli_fixed", 0.3, e_H=30), **base),
                         ExponentialImportance(2.0), 0.99)
    sched = HarvestModel("bernoulli_fixed", 0.3, e_H=30, schedule=(Regime(500, e_H=30),))
    varying = flat.replace(costs=CostModel(harvest=sched, **base))
    a = [o.v_hat for o in simulate_replications(flat, "ns", 2000, 200, 11)]
    b = [o.v_hat for o in simulate_replications(varying, "ns", 2000, 200, 12,
                                                runner=run_non_stationary)]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_non_stationary_requires_schedule(fig8_scenario):
    with pytest.raises(ValueError):
        run_non_stationary(fig8_scenario, "ns", 10, 0)


def test_regime_switch_changes_recharge():
    sched = HarvestModel("bernoulli_fixed", 0.5, e_H=20, schedule=(Regime(4000, e_H=20), Regime(4000, e_H=1)))
    sc = ScenarioModel(100, CostModel(c_R=3, c_T=5, harvest=sched), ExponentialImportance(1.0), 0.99)
    out = run_non_stationary(sc, "ns", 8000, 0)
    # epochs are several slots long, so the regimes are only roughly aligned
    assert out.battery[500:1500].mean() > out.battery[-1000:].mean() + 20


# ----------------------------------------------------------- replications


def test_replications_independent():
    sc = ScenarioModel(50, CostModel(c_R=3, c_T=5, p_fail=0.3,
                                     harvest=HarvestModel("bernoulli_fixed", 0.3, e_H=30)),
                       ExponentialImportance(2.0), 0.99)
    v = np.array([o.v_hat for o in simulate_replications(sc, "ns", 1000, 200, 4)])
    r = np.corrcoef(v[:-1], v[1:])[0, 1]
    assert abs(r) < 0.1
    assert len(set(v.tolist())) == 200


def test_thread_count_does_not_change_results(fig8_scenario):
    sap = SapState.zeros(100, 0.999, StepSchedule.decaying(0.01))
    one = simulate_replications(fig8_scenario, sap, 3000, 6, 9, threads=1)
    many = simulate_replications(fig8_scenario, sap, 3000, 6, 9, threads=3)
    assert [o.v_hat for o in one] == [o.v_hat for o in many]


def test_replicate_order_and_seeds():
    seen = replicate(lambda r, s: (r, s.spawn_key), 4, 7, threads=2)
    assert seen == [(r, (r,)) for r in range(4)]


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("HARVEST_CENSOR_THREADS", "1")
    assert worker_count(8) == 1


def test_summarize():
    assert summarize([1.0, 3.0]) == (2.0, pytest.approx(np.sqrt(2)), 2)
    assert summarize([5.0]) == (5.0, 0.0, 1)
    assert summarize([])[2] == 0
