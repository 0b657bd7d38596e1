"""Scattering phase of planar Dirichlet obstacles."""

__version__ = "0.1.0"
