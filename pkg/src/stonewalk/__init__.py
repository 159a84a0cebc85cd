"""Pairwise genealogies in one-dimensional stepping stone and voter models."""

__version__ = "0.1.0"
