"""Lattice laboratory for Gaussian fluctuations of XY and gradient-field models."""

__version__ = "0.1.0"
