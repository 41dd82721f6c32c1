"""Exception types shared across the package."""


class NeuropError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(NeuropError, ValueError):
    """An argument violates a documented precondition."""


class NumericalFailureError(NeuropError, ArithmeticError):
    """An iterative numerical procedure failed to converge or produced
    non-finite values."""
