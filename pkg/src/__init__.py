"""Latent collocation planning with learned Gaussian dynamics."""

__version__ = "1.0.0"
