"""Adaptive gradient-flow optimization with a wave energy park application."""

__version__ = "0.1.0"
