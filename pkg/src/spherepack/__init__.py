"""Sphere-set approximation of triangle meshes."""

__version__ = "0.1.0"
