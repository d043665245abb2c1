import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from harvest_censor import CostModel, ExponentialImportance, HarvestModel, Pmf, ScenarioModel, TabulatedCosts

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def tabulated(c0, c1):
    """Costs from two ``{value: prob}`` tables."""
    return TabulatedCosts(Pmf.from_dict(c0), Pmf.from_dict(c1))


def random_small_costs(rng, lo0=-3, hi0=2, lo1=0, hi1=5):
    def one(lo, hi):
        k = int(rng.integers(1, 4))
        vals = rng.choice(np.arange(lo, hi + 1), size=k, replace=False)
        return dict(zip(vals.tolist(), rng.dirichlet(np.ones(k)).tolist()))

    return tabulated(one(lo0, hi0), one(lo1, hi1))


@pytest.fixture
def fig8_scenario():
    harvest = HarvestModel("bernoulli_fixed", 0.3, e_H=30)
    costs = CostModel(c_R=3, c_T=5, p_fail=0.3, harvest=harvest)
    return ScenarioModel(100, costs, ExponentialImportance(2.0), 0.999)


@pytest.fixture
def small_scenario():
    harvest = HarvestModel("bernoulli_fixed", 0.4, e_H=6)
    costs = CostModel(c_R=1, c_T=3, p_fail=0.2, harvest=harvest)
    return ScenarioModel(20, costs, ExponentialImportance(1.0), 0.95)
