"""Causal mode multiplexing for RGB/thermal classification, with a synthetic
benchmark that reproduces (and removes) the thermal-shortcut bias."""

from .causal import CausalEffects, NoTreatment, PredictionTriple
from .model import CmmModel
from .objective import Strategy

__all__ = ["CausalEffects", "CmmModel", "NoTreatment", "PredictionTriple", "Strategy"]
__version__ = "0.1.0"
