"""Agents on a bounded risk-coordinate space, their aggregated fields, and the
price/return decomposition by expectation type."""

from ._kernels import BACKEND
from .errors import ConfigError, DegeneracyError, DomainError, EconospaceError, NumericError, StabilityError

__all__ = [
    "BACKEND",
    "ConfigError",
    "DegeneracyError",
    "DomainError",
    "EconospaceError",
    "NumericError",
    "StabilityError",
]
__version__ = "0.1.0"
