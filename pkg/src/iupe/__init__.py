"""Imitation from observation with goal-aware sampling, exploration and attention."""

__version__ = "0.1.0"
