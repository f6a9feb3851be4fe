"""Constrained QAOA and exact classical solvers for the product breakdown structure problem."""

__version__ = "0.1.0"
