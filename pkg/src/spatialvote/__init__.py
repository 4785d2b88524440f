"""Bayesian ideal-point estimation for roll-call data on the line and on the circle."""

__version__ = "0.1.0"
