"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError and DomainError -> 3.
"""


class MavError(Exception):
    """Base class for all package errors."""


class DomainError(MavError, ValueError):
    """An argument lies outside the domain of a pool or price operation."""


class TickExhaustedError(DomainError):
    """A trade does not fit inside the current concentrated-liquidity range."""

    def __init__(self, message, max_dy):
        super().__init__(message)
        self.max_dy = max_dy


class DataError(MavError):
    """Input data is malformed, inconsistent, or insufficient."""


class ConfigError(MavError):
    """The run configuration is invalid."""


class NumericError(MavError, ArithmeticError):
    """A numerical routine failed (rank deficiency, non-convergence, ...)."""
