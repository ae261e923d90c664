"""Sparse Hermite expansions for 1D lognormal diffusion."""

__version__ = "0.1.0"
