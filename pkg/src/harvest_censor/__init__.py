"""Transmit-or-censor policies for energy-harvesting sensor nodes.

The solver finds the optimal energy-dependent importance threshold of a
battery-limited node, the steady-state module evaluates it (and the balanced
and non-selective baselines) analytically, the learners approximate it online
and the simulators measure it in single-hop and multi-hop networks.
"""

__version__ = "0.1.0"

from .env import (
    CostModel,
    CostSample,
    EmpiricalImportance,
    ExponentialImportance,
    HarvestModel,
    Pmf,
    Regime,
    ScenarioModel,
    TabulatedCosts,
    clip,
    cost_pmf,
    importance_stats,
    sample_epoch,
)
from .errors import (
    BadTopology,
    ConfigError,
    Degenerate,
    HarvestCensorError,
    NoConvergence,
    TooLarge,
)
from .mdp import ReducedValue, ThresholdPolicy, decide, success_probability, value_iteration
from .steady import (
    balanced_performance,
    balanced_threshold,
    build_transition_matrix,
    expected_performance,
    nonselective_performance,
    stationary_distribution,
)
from .learners import (
    AbtState,
    QTable,
    SapState,
    StepSchedule,
    abt_update,
    q_decide,
    q_update,
    sap_decide,
    sap_matrix_step,
    sap_update,
)
from .sim import SimulationOutcome, run_non_stationary, run_single_hop, simulate_replications
from .network import Topology, build_topology, run_multi_hop
from .config import load_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
