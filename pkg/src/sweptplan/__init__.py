"""Trajectory optimization with support-function collision certificates and
swept-volume (continuous) collision avoidance for a kinematic car."""

__version__ = "0.1.0"
