"""Simulation and analysis toolkit for cavity-enhanced Raman quantum memories."""

__version__ = "0.1.0"
