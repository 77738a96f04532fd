"""Spectral-in-time solvers for evolutionary equations ``(d/dt M(d/dt) + A) U = F``."""

__version__ = "0.1.0"
