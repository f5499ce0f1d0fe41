"""Regularized multi-label classification with F1-optimal prediction."""

__version__ = "0.1.0"
