"""Numerical laboratory for generalization bounds of symmetry-aware forecasters."""

__version__ = "0.1.0"
