"""Exception types shared across the package."""


class GpdexError(Exception):
    """Base class for all package errors."""


class DesignError(GpdexError, ValueError):
    """Invalid design or argument (bad shape, out of box, too few points)."""


class ConfigError(GpdexError, ValueError):
    """Invalid model or optimizer configuration."""


class FactorizationError(GpdexError, ArithmeticError):
    """A symmetric positive-definite factorization failed.

    ``condition`` carries the 2-norm condition estimate of the offending
    matrix (``inf`` when it has non-positive eigenvalues).
    """

    def __init__(self, message, condition=float("nan")):
        super().__init__(message)
        self.condition = condition


class DegeneracyError(GpdexError, ArithmeticError):
    """A bound is undefined because a moment/eigenvalue is numerically zero."""
