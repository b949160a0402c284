"""Graph-incorporated latent factor analysis for sparse rating matrices."""

__version__ = "0.1.0"
