"""Exception and warning types raised across exitlab."""


class ExitlabError(Exception):
    """Base class for all package errors."""


class ModelError(ExitlabError):
    """Invalid model configuration or a violated model invariant."""


class GeometryError(ExitlabError):
    """Boundary projection or parametrization failed."""


class BoundaryDegeneracyError(GeometryError):
    """The gradient of the level-set function vanishes near the boundary."""


class NonAttractionError(ExitlabError):
    """A deterministic trajectory left the bounding box instead of converging."""


class PathError(ExitlabError, ValueError):
    """Malformed path input (non-monotone times, coincident points, ...)."""


class NoRootError(ExitlabError):
    """``M(lambda) = lambda`` has no solution on the scanned grid."""


class MultipleRootError(ExitlabError):
    """``M(lambda) = lambda`` changes sign more than once on the grid."""


class AmbiguousMinimizerError(ExitlabError):
    """The boundary minimum of the quasipotential is not attained at a single point."""


class AmbiguousMinimizerWarning(UserWarning):
    """Two well separated boundary points nearly tie for the minimum."""


class SimulationBudgetError(ExitlabError):
    """A trajectory needed more steps than the configured budget."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrapError(ExitlabError):
    """The trap boundary problem cannot be set up or solved."""
