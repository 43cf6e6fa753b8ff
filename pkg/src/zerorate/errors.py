"""Exception hierarchy shared by every module."""

from __future__ import annotations


class ZeroRateError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ZeroRateError, ValueError):
    """Malformed input: shapes, positivity, normalization, ranges."""


class DomainError(ZeroRateError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConvergenceError(ZeroRateError, RuntimeError):
    """An iterative method stopped before meeting its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class ResourceCapError(ZeroRateError, RuntimeError):
    """An enumeration would exceed the configured size cap."""

    def __init__(self, message: str, required: int, cap: int):
        super().__init__(f"{message}: {required} items exceeds cap {cap}")
        self.required = required
        self.cap = cap
