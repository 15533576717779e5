"""Bayesian case linkage, crime-series clustering and suspect prioritization."""

__version__ = "0.1.0"
