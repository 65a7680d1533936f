"""Graph link prediction with diffusion-generated multi-level negative samples."""

__version__ = "0.1.0"
