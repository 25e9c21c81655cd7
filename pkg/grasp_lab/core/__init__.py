"""Core interface contracts."""

from .protocols import PlanSource, RolloutEnv, VisualFeatureSource

__all__ = ["PlanSource", "RolloutEnv", "VisualFeatureSource"]
