"""Matching patterns mined from pairs of dependency trees, and a sparse
deep ranking model built on them."""

__version__ = "0.1.0"
