"""Thresholded lexicographic deep Q-learning for pedestrian-aware longitudinal driving."""

__version__ = "0.1.0"
