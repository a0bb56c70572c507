"""Heterogeneous collaborative learning with adaptive per-worker pruning."""

__version__ = "0.1.0"
