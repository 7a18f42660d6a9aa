"""Numerical tools for one-dimensional matrix-valued Anderson models."""

__version__ = "0.1.0"
