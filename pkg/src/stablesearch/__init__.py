"""Stability-selection based causal structure search for linear-Gaussian SEMs."""

__version__ = "0.1.0"
