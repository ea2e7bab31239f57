"""Differentiable tensorized agent-based epidemic simulation and calibration."""

__version__ = "0.1.0"
