"""Structural link prediction toolkit for knowledge graphs."""

__version__ = "0.1.0"
