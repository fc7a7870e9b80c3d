"""Numerical laboratory for nonsingular Poisson suspensions."""

__version__ = "0.1.0"
