"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain (e.g. coincident particles)."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Carries the last iterate so callers can inspect or restart.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NotAMinimumError(RuntimeError):
    """A Hessian expected to be positive definite was not."""


class InvalidKernelError(ValueError):
    """Gaussian kernel parameters do not define a valid positive operator."""


class InconsistencyError(RuntimeError):
    """Internally inconsistent inputs (e.g. site traces violating probability)."""


class UnsupportedError(RuntimeError):
    """Requested configuration is outside the supported parameter range."""


class PrecisionError(RuntimeError):
    """A stochastic estimate is too noisy for the requested use."""


class SearchFailureError(RuntimeError):
    """A root or bracket search exhausted its scan without success."""


class NystromWarning(UserWarning):
    """Discretized density matrix shows signs of incomplete convergence."""


class BoundaryWarning(UserWarning):
    """A minimizer landed on the boundary of its search interval."""
