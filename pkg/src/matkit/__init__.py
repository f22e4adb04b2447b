"""Desk-scale SVBRDF material generation toolkit."""

__version__ = "0.1.0"
