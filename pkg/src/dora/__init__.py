"""Sharp edge sampling, complexity benchmarking and a toy occupancy VAE."""

__version__ = "0.1.0"
