"""Exception hierarchy shared by all modules."""


class HdvPlanError(Exception):
    """Base class for every error raised by the package."""


class ParseError(HdvPlanError):
    """Malformed road or trajectory input."""


class ValidationError(HdvPlanError, ValueError):
    """An input violates a documented invariant.

    ``index`` points at the offending sample when one is known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class OutOfRange(HdvPlanError, ValueError):
    pass


class ProjectionDiverged(HdvPlanError):
    pass


class DomainError(HdvPlanError, ValueError):
    """State left the validity domain of the road-aligned model."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class GeometryInfeasible(HdvPlanError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NoConvergence(HdvPlanError):
    pass


class MaxIterations(NoConvergence):
    """Iteration limit reached; ``solution`` holds the last iterate and its residuals."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasibleDetected(HdvPlanError):
    """A primal or dual infeasibility certificate was found (see ``solution.status``)."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class LinearizationFailed(HdvPlanError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
