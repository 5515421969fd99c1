"""Correlated-noise estimation with quantum sensor networks."""

__version__ = "0.1.0"
