"""Numerical laboratory for Schramm-Loewner evolution."""

__version__ = "0.1.0"
