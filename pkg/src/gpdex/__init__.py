"""Error bounds and experimental designs for Gaussian-process emulators."""

from .errors import ConfigError, DegeneracyError, DesignError, FactorizationError, GpdexError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegeneracyError",
    "DesignError",
    "FactorizationError",
    "GpdexError",
]
