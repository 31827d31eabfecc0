"""Quasi-Monte Carlo integration with uncertainty quantification."""

__version__ = "0.1.0"
