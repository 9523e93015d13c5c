"""Exception hierarchy shared by every solver module."""


class SPSError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(SPSError, ValueError):
    pass


class GridMismatchError(SPSError, ValueError):
    pass


class DomainError(SPSError, ValueError):
    pass


class BracketError(SPSError, ValueError):
    pass


class NumericalError(SPSError, ArithmeticError):
    """An integrator produced a non-finite value.

    ``last_radius`` is the last radius at which the state was finite.
    """

    def __init__(self, message, last_radius=None):
        super().__init__(message)
        self.last_radius = last_radius


class StepSizeError(SPSError, RuntimeError):
    pass


class NonConvergenceError(SPSError, RuntimeError):
    """Iteration budget exhausted; ``best`` carries the best iterate seen."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(SPSError, ValueError):
    """Unreadable configuration file, unknown key or malformed value."""
