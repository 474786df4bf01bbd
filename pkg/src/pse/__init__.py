"""Desk-scale personalized speech enhancement with data purification."""

__version__ = "0.1.0"
