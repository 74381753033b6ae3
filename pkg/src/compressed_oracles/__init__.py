"""Compressed oracles for random functions and permutations."""

__version__ = "0.1.0"
