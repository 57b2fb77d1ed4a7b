"""Exception hierarchy shared by all ghostproj modules."""


class GhostProjError(Exception):
    """Base class for every error raised by ghostproj."""


class ValidationError(GhostProjError, ValueError):
    """An input violated a documented precondition.

    ``field`` names the offending parameter when there is a single one.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class GeometryError(ValidationError):
    """A window offset falls outside the mask it is applied to."""

    def __init__(self, message, index=None):
        super().__init__(message, field="offsets")
        self.index = index


class PlanningError(GhostProjError):
    """The planner could not produce a usable exposure plan."""


class NNLSIterationError(GhostProjError):
    """The active-set solver hit its iteration cap.

    Carries the best feasible iterate found so far.
    """

    def __init__(self, message, weights, residual_norm, iterations):
        super().__init__(message)
        self.weights = weights
        self.residual_norm = residual_norm
        self.iterations = iterations
