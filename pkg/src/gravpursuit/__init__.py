"""Greedy Tikhonov solvers (RFMP/ROFMP) for downward continuation of
spherical gravity data, with regularization-parameter choice methods."""

__version__ = "0.1.0"
