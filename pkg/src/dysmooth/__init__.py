"""Smoothness of functions on the unit cube from their values on dyadic meshes."""

__version__ = "0.1.0"
