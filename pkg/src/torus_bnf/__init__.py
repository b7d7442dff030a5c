"""Birkhoff normal forms for Hamiltonian PDEs on the torus."""

__version__ = "0.1.0"
