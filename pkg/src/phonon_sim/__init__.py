"""Bright and dark states of two bosonic modes coupled to one trapped-ion qubit."""

__version__ = "0.1.0"
