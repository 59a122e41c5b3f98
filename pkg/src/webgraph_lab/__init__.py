"""Desk-scale lab for graph-based tracker detection and its evasion."""

__version__ = "0.1.0"
