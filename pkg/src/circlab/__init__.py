"""Numerical experiments for the circular law of sparse non-Hermitian random matrices."""

__version__ = "0.1.0"
