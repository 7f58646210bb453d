"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SleLabError(Exception):
    """Base class."""


class DomainError(SleLabError, ValueError):
    """Argument outside the domain of a formula or operation."""


class SingularityError(SleLabError, ArithmeticError):
    """Evaluation at a singular point (e.g. vanishing derivative)."""


class SwallowedError(SleLabError):
    """A point was swallowed by the hull."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NumericalInstabilityError(SleLabError, ArithmeticError):
    """Overflow or loss of precision during a computation."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ConfigError(SleLabError, ValueError):
    """Malformed experiment configuration."""


class UnsupportedHullError(SleLabError, ValueError):
    """Operation needs a closed-form map the hull does not have."""
