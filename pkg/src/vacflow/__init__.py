"""Numerics for barotropic compressible flow near vacuum with relative-energy certification."""

__version__ = "0.1.0"
