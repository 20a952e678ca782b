"""Numerics for tensor norms, ranks and Sigma-operators on finite-dimensional normed spaces."""

__version__ = "0.1.0"
