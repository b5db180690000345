"""Unsupervised minimax games between small neural networks."""

__version__ = "0.1.0"
