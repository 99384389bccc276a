"""Bayesian optimisation of a ConvLSTM steering-angle regressor, with a small
numpy neural-network core, data pipeline and evaluation metrics."""

__version__ = "0.1.0"
