"""Guided view sampling for novel view synthesis capture."""

__version__ = "0.1.0"
