"""Quasihyperbolic distances and volumes in complements of compact sets."""

__version__ = "0.1.0"
