"""Exception hierarchy shared across the workbench."""


class FbsError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(FbsError, ValueError):
    pass


class DomainError(FbsError, ValueError):
    pass


class InfeasibleError(FbsError):
    """The utilization budget cannot cover the minimum frequencies."""


class DegenerateProblemError(FbsError):
    pass


class SolverAssumptionError(FbsError):
    """A cost handed to a convex solver is not convex/decreasing."""


class ConvergenceError(FbsError):
    pass


class ResourceError(FbsError):
    pass


class TrainingDivergedError(FbsError):
    pass


class DesignError(FbsError):
    """LQG design failed (Riccati iteration did not converge)."""


class ModelParseError(FbsError, ValueError):
    pass
