"""Weighted-space toolkit for elliptic problems on planar corner domains."""

__version__ = "0.1.0"
