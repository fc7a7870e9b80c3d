"""Exception types shared across the package."""

from __future__ import annotations


class ArgumentError(ValueError):
    """An argument violates an operation's precondition in a caller-visible way."""


class PreconditionError(ValueError):
    """A mathematical precondition failed numerically (e.g. a divergent norm)."""

    def __init__(self, message: str, norm: str | None = None):
        super().__init__(message)
        self.norm = norm


class NumericFailure(RuntimeError):
    """A numerical procedure did not converge.

    ``residual`` holds whatever diagnostic the procedure had when it gave up:
    a quadrature error estimate, or the sequence of limit increments.
    """

    def __init__(self, message: str, residual=None):
        super().__init__(message)
        self.residual = residual


class ConstructionRejected(ValueError):
    """A construction's hypothesis failed for a specific (level, group element)."""

    def __init__(self, message: str, n: int, g: int):
        super().__init__(message)
        self.n = n
        self.g = g


class ConfigError(ValueError):
    """A scenario file is malformed or references unknown names."""
