"""Symplectic and variational indices of periodic orbits."""

__version__ = "0.1.0"
