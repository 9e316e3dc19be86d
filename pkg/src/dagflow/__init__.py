"""Reward alignment of diffusion samplers with GFlowNet objectives."""

__version__ = "0.1.0"
