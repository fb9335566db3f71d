"""Geometry-based V2V radio propagation engine."""

__version__ = "0.1.0"
