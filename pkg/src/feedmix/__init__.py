"""Feedstock import mix optimization with cost, transport and water-scarcity terms."""

from .analytic import (
    CompensationReport,
    RegimeDiagnosis,
    compensation_condition,
    diagnose,
    interchangeable_linear,
    solve_analytic,
    solve_linear_free,
    solve_scarcity_free_transport,
    solve_transport_no_scarcity,
    transport_critical_point,
)
from .errors import (
    EmptyGrid,
    FeedmixError,
    InfeasibleScenario,
    NonConvergence,
    RootBracketFailure,
    SaturatedReservoir,
    ScenarioError,
)
from .model import (
    FeedstockRecord,
    Regime,
    Scenario,
    Solution,
    Status,
    ces,
    existence_condition,
    feasible_point,
    is_feasible,
    objective,
    productive_potential,
    total_cost,
    water_impact,
    xi_bar,
)
from .oracle import GridSpec, certify, grid_search
from .solver import SolverConfig, gradient, kkt_residual, solve

__version__ = "0.1.0"
