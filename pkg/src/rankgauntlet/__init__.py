"""Federated ranking-learning simulator and robustness toolkit."""

__version__ = "0.1.0"
