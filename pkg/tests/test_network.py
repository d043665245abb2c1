import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harvest_censor import (
    BadTopology,
    CostModel,
    EmpiricalImportance,
    HarvestModel,
    ScenarioModel,
    ThresholdPolicy,
    Topology,
    build_topology,
    run_multi_hop,
)
from harvest_censor import experiments as X
from harvest_censor.network import grid, random_tree


def chain(n):
    """Line ``1 -> 2 -> ... -> n`` with ``n`` the sink."""
    return Topology.from_next_hops({i: i + 1 for i in range(1, n)}, n)


# ------------------------------------------------------------ topologies


def test_two_node_tree():
    t = random_tree(2, 0)
    assert t.sink == 2 and t.next_hop[1] == 2 and t.sensors == [1]


@given(st.integers(2, 60), st.integers(0, 10_000))
def test_random_tree_links_upward(n, seed):
    t = random_tree(n, seed)
    assert all(t.next_hop[i] > i for i in range(1, n))
    assert t.next_hop[n] == 0
    assert all(t.route(i)[-1] == n for i in range(1, n + 1))


def test_random_tree_reproducible():
    np.testing.assert_array_equal(random_tree(20, 5).next_hop, random_tree(20, 5).next_hop)


def test_grid_corner_and_center_routes():
    g = grid(3, 3, "corner")
    assert g.sink == 9
    assert g.route_length(1) == 4
    assert max(g.route_length(i) for i in g.sensors) == 4
    c = grid(3, 3, "center")
    assert c.sink == 5
    assert max(c.route_length(i) for i in c.sensors) == 2
    assert sorted(c.route_length(i) for i in c.sensors) == [1, 1, 1, 1, 2, 2, 2, 2]


def test_grid_routes_follow_lattice_edges():
    g = build_topology("grid", (4, 5), "corner")
    for i in g.sensors:
        j = int(g.next_hop[i])
        r1, c1 = divmod(i - 1, 5)
        r2, c2 = divmod(j - 1, 5)
        assert abs(r1 - r2) + abs(c1 - c2) == 1


@pytest.mark.parametrize("build", [
    lambda: Topology.from_next_hops({1: 2, 2: 1}, 3),
    lambda: Topology.from_next_hops({1: 3, 3: 1}, 3),
    lambda: Topology.from_next_hops({1: 7}, 2),
    lambda: random_tree(1, 0),
    lambda: grid(3, 3, 42),
    lambda: build_topology("ring", 5),
])
def test_bad_topologies(build):
    with pytest.raises(BadTopology):
        build()


# ------------------------------------------------------------ simulation


def free_scenario(gamma=0.9):
    costs = CostModel(c_T=0, harvest=HarvestModel("bernoulli_fixed", 0.5, e_H=0))
    return ScenarioModel(5, costs, EmpiricalImportance.from_dict({1.0: 1.0}), gamma)


def test_free_chain_delivers_everything():
    T, g = 200, 0.9
    out = run_multi_hop(chain(2), free_scenario(g), "ns", T, 0, gen_prob=1.0)
    assert out.tx_count[0] == T and out.censor_count[0] == 0
    # one hop per slot: arrivals at slots 1..T-1 fall inside the window from T/2
    assert out.v_hat == pytest.approx((1 - g ** (T - T // 2)) / (1 - g))


def test_extra_hops_delay_arrivals():
    T, g = 200, 0.9
    out = run_multi_hop(chain(3), free_scenario(g), "ns", T, 0, gen_prob=1.0)
    # node 1's messages take two slots, so its arrivals start at slot 2; both
    # streams still cover the whole window [T/2, T)
    one = (1 - g ** (T - T // 2)) / (1 - g)
    assert out.v_hat == pytest.approx(2 * one, rel=1e-12)
    late = run_multi_hop(chain(3), free_scenario(g), "ns", 4, 0, gen_prob=1.0)
    # T = 4: window slots 2 and 3; node 2 delivers at both, node 1 at both
    assert late.v_hat == pytest.approx(2 * (1 + g))
    # T = 3: window slots 1 and 2; node 1's first arrival is only at slot 2
    short = run_multi_hop(chain(3), free_scenario(g), "ns", 3, 0, gen_prob=1.0)
    assert short.v_hat == pytest.approx(1 + 2 * g)
    np.testing.assert_array_equal(out.nodes, [1, 2])


def test_censoring_relay_blocks_everything():
    sc = X.network_scenario(0.5)
    w = np.ones(sc.B + 1)
    pols = {1: ThresholdPolicy(np.zeros(sc.B + 1), w), 2: ThresholdPolicy(np.full(sc.B + 1, np.inf), w)}
    out = run_multi_hop(chain(3), sc, "threshold", 3000, 1, threshold=pols)
    assert out.v_hat == 0.0
    assert out.tx_count[1] == 0 and out.tx_count[0] > 0


def test_threshold_needs_policies():
    with pytest.raises(ValueError):
        run_multi_hop(chain(3), X.network_scenario(0.5), "threshold", 100, 0)
    with pytest.raises(ValueError):
        run_multi_hop(chain(3), X.network_scenario(0.5), "q", 100, 0)


@pytest.mark.parametrize("kind", ["ns", "sap", "abt"])
def test_multi_hop_deterministic(kind):
    topo = random_tree(10, 3)
    sc = X.network_scenario(0.5)
    a = run_multi_hop(topo, sc, kind, 2000, 7, keep_trace=True)
    b = run_multi_hop(topo, sc, kind, 2000, 7, keep_trace=True)
    assert a.v_hat == b.v_hat
    np.testing.assert_array_equal(a.battery, b.battery)


@pytest.mark.parametrize("kind", ["ns", "sap", "abt"])
def test_battery_stays_in_range(kind):
    sc = X.network_scenario(0.3)
    out = run_multi_hop(grid(3, 3), sc, kind, 3000, 2, keep_trace=True)
    assert out.battery.shape == (3000, 8)
    assert out.battery.min() >= 0 and out.battery.max() <= sc.B
    if kind != "ns":
        assert len(out.learner) == 8


def test_lossy_channel_runs():
    sc = X.network_scenario(0.5)
    lossy = sc.replace(costs=CostModel(c_R=1, c_T=2, p_fail=0.5, harvest=sc.costs.harvest))
    clean = run_multi_hop(random_tree(10, 1), sc, "ns", 3000, 4)
    noisy = run_multi_hop(random_tree(10, 1), lossy, "ns", 3000, 4)
    assert noisy.battery_mean.mean() < clean.battery_mean.mean()


def test_center_sink_beats_corner_sink():
    sc = X.network_scenario(0.5)
    v = {s: np.mean([run_multi_hop(grid(3, 3, s), sc, "ns", 5000, r).v_hat for r in range(5)])
         for s in ("corner", "center")}
    assert v["center"] >= v["corner"]
