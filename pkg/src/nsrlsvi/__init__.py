"""Null-space randomized value iteration for linear Bellman complete MDPs."""

__version__ = "0.1.0"
