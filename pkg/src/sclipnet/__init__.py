"""Decentralized smoothed-clipping SGD with error feedback under heavy-tailed noise."""

__version__ = "0.1.0"
