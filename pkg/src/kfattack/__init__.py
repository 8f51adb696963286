"""Optimal bias-injection attacks on multi-sensor Kalman filter tracking."""

__version__ = "0.1.0"
