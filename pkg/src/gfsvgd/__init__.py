"""Gradient-free Stein variational gradient descent and friends."""
__version__ = "0.1.0"
