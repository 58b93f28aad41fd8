"""Numerical lab for central limit theorem constants of Wigner matrix
linear eigenvalue statistics."""

__version__ = "0.1.0"
