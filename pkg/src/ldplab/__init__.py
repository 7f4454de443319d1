"""Numerical laboratory for Haar-distributed frames, projected product
measures, and their log-determinant rate functions."""

__version__ = "0.1.0"
