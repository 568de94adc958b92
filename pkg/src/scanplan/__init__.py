"""Panoramic scan view planning on 2D occupancy grids."""

__version__ = "0.1.0"
