"""Recover the support and intensity of an elliptic source by shape optimization."""

__version__ = "0.1.0"
