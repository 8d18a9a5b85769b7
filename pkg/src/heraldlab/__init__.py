"""Numerical laboratory for programmable heralded non-Gaussian light."""

__version__ = "0.1.0"
