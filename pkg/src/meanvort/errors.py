"""Exception hierarchy shared by the solver modules."""


class MeanvortError(Exception):
    """Base class for all solver errors."""


class NonConvergence(MeanvortError):
    """An iterative elliptic solve hit its iteration cap above tolerance."""

    def __init__(self, message, iters=None, residual=None):
        super().__init__(message)
        self.iters = iters
        self.residual = residual


class CflViolation(MeanvortError):
    """A time step exceeds the stability limit of the explicit update."""


class Divergence(MeanvortError):
    """Picard iterates stopped contracting."""


class OutOfRange(MeanvortError):
    """A characteristic curve was queried outside its sampled horizon."""


class BracketFailure(MeanvortError):
    """The bisection bracket for the inverse sigma map is invalid."""


class RegimeMismatch(MeanvortError):
    """A diagnostic or command was invoked outside its parameter regime."""


class InsufficientSnapshots(MeanvortError):
    """Too few stored snapshots for a time-differenced diagnostic."""
