"""Exception hierarchy shared by all modules."""


class FracSemiError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(FracSemiError, ValueError):
    """Invalid geometry, parameter regime or run configuration."""


class DomainError(FracSemiError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UsageError(FracSemiError, ValueError):
    """Objects that do not belong together (e.g. fields on different grids)."""


class DiagnosticError(FracSemiError):
    """A numerical certificate or sanity check failed."""


class ConsistencyError(DiagnosticError):
    """Two independent routes to the same quantity disagree."""


class NonConvergenceError(FracSemiError):
    """An iteration hit its cap. Carries the best iterate seen so far."""

    def __init__(self, message, best=None, residual=None, trace=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.trace = trace if trace is not None else []


class MonotonicityError(DiagnosticError):
    """A monotone iteration stepped the wrong way at some node."""


class InfeasibleError(FracSemiError):
    """A threshold search found no admissible parameter below its cap."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
