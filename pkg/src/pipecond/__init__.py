"""Sewer pipe condition prediction from inventory attributes."""

__version__ = "0.1.0"
