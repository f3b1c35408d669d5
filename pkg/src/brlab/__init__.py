"""Numerical laboratory for curve-adapted Bochner-Riesz means and square functions."""
__version__ = "0.1.0"
