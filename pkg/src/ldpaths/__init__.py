"""Optimal conditioned histories and bad terminal points for mean-field large deviations."""

__version__ = "0.1.0"
