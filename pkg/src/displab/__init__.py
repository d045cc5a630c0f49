"""Computational laboratory for the dispersion method in arithmetic progressions."""

__version__ = "0.1.0"
