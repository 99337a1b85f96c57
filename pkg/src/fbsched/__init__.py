"""Feedback scheduling of control tasks: optimal and neural period assignment,
LQG pendulum plants and a fixed-priority co-simulation kernel."""

from .cost import CostFunction
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateProblemError,
    DesignError,
    DomainError,
    FbsError,
    InfeasibleError,
    ModelParseError,
    ResourceError,
    SolverAssumptionError,
    TrainingDivergedError,
)
from .kernel import ExecTrace, LoopSpec, SimConfig, SimLog, default_paper_trace, run_simulation
from .optimizer import (
    OptimalAssignment,
    OptimizationProblem,
    brute_force_oracle,
    check_kkt,
    solve_closed_form,
    solve_dual_bisection,
)
from .tasks import TaskSpec, assign_rm_priorities, ll_bound, requested_utilization

__version__ = "0.1.0"
