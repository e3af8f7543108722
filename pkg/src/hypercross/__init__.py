"""Numerical laboratory for linearized maximal hyperbolic-cross multipliers."""

__version__ = "0.1.0"
