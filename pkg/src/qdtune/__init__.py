"""Noise-robust autotuning of simulated double quantum dots."""

__version__ = "0.1.0"
