"""Exception types shared across the package."""


class TurnpikeError(Exception):
    """Base class for all errors raised by lqturnpike."""


class DimensionError(TurnpikeError, ValueError):
    """Matrix shapes are inconsistent (usage error)."""


class NotPositiveDefinite(TurnpikeError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is the zero-based index of the failing pivot and ``value`` the
    pivot value that was rejected.
    """

    def __init__(self, pivot, value, message=None):
        self.pivot = pivot
        self.value = value
        super().__init__(message or f"matrix is not positive definite (pivot {pivot} = {value:.3e})")


class Inconclusive(TurnpikeError):
    """Gelfand estimate and Lyapunov-convergence check disagree."""


class NoConvergence(TurnpikeError):
    """A fixed-point iteration hit its iteration cap."""

    def __init__(self, message, iterations=None, last_change=None):
        self.iterations = iterations
        self.last_change = last_change
        super().__init__(message)


class CertificateNotFound(TurnpikeError):
    """No dissipativity certificate could be constructed."""

    def __init__(self, message, best_margin=None):
        self.best_margin = best_margin
        super().__init__(message)


class DegeneratePerturbation(TurnpikeError, ValueError):
    """A perturbation that is almost surely zero was supplied."""


class BoundViolated(TurnpikeError):
    """A turnpike inequality failed; indicates an implementation bug."""
