"""Floquet and Kato decompositions of time-periodic Hamiltonians."""

__version__ = "0.1.0"
