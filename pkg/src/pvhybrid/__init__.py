"""Hybrid PV power forecaster: GP symbolic regression averaged with an MLP."""

__version__ = "0.1.0"
