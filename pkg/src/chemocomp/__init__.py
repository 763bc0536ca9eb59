"""Radial solver and diagnostics for a two-species chemotaxis-competition system."""

from .grid import RadialField, RadialGrid
from .model import HKind, ModelParams, Species, Verdict, classify_regime

__all__ = ["RadialField", "RadialGrid", "HKind", "ModelParams", "Species", "Verdict", "classify_regime"]
__version__ = "0.1.0"
