"""Numerical stability toolkit for rough differential equations."""
__version__ = "0.1.0"
