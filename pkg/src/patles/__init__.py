"""Limiting behavior of linear eigenvalue statistics of generalized
patterned random matrices: exact partition/circuit combinatorics, limit
formulas, and Monte Carlo validation."""

__version__ = "0.1.0"
