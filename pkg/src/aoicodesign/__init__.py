"""Joint processing-time and transmission scheduling for AoI-driven monitoring."""

from .aoi import AgentSpec, AoiState, DomainError, reset_age, step_aoi
from .costs import (
    AffineAoiCost,
    CostModel,
    EntropyGridCost,
    PowerAoiCost,
    check_assumption1,
    entropy_of_region,
    eval_cost,
)
from .threshold import (
    NEVER,
    TauChoice,
    ThresholdResult,
    best_tau,
    optimal_threshold,
    threshold_cost,
    utilization,
    v_function,
    whittle_index,
)
from .codesign import CodesignResult, OptimizerConfig, dual_value, optimize
from .oracle import OracleResult, solve_mdp, verify_threshold_structure
from .sim import Policy, SimReport, compare_policies, run

__version__ = "0.1.0"
