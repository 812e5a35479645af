"""Depth-video background subtraction: preprocessing, patch CNN, metrics."""

__version__ = "0.1.0"
