"""Simulation and policy-search toolkit for pattern cutting on suspended gauze."""

__version__ = "0.1.0"
