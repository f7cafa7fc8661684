"""Piecewise-constant ensemble control synthesis for bilinear conservative systems."""

__version__ = "0.1.0"
