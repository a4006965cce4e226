"""Finite element accuracy limits: measure truncation and round-off error
branches on refinement sequences and predict the optimal DoF count."""

__version__ = "0.1.0"
