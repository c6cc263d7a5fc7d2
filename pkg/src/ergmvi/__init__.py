"""Variational Bayes, Laplace and exchange-algorithm inference for ERGMs."""

__version__ = "0.1.0"
DATA_FORMAT_VERSION = "1"
