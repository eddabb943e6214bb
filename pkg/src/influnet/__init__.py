"""Bayesian influence networks and idea-diffusion cascades."""

__version__ = "0.1.0"
