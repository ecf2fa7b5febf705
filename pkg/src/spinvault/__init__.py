"""Cavity-modulated storage of a single excitation in an inhomogeneous spin ensemble."""

__version__ = "0.1.0"
