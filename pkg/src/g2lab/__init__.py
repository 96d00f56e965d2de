"""Numerical laboratory for closed G2 structures on flat 7-tori."""

__version__ = "0.1.0"
