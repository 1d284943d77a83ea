"""Thermal face refinement, quality scoring and position-map 3-D reconstruction."""

__version__ = "0.1.0"
