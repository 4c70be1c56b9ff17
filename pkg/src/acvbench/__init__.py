"""Desk-scale testbed for hierarchical agent-based microservice management."""

__version__ = "0.1.0"
