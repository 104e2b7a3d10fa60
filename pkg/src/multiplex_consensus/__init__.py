"""Consensus games on multiplex social networks."""

__version__ = "0.1.0"
