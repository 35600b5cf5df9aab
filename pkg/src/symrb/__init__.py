"""Rank-adaptive symplectic model reduction for parametrized Hamiltonian systems."""

__version__ = "0.1.0"
