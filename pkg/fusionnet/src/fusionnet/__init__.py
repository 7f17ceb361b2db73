"""Learned reconstruction from boundary measurements with mask guidance."""

from .config import ModelConfig, PhaseConfig, TrainConfig
from .model import FusionNet, build_model

__version__ = "1.0.0"

__all__ = ["ModelConfig", "PhaseConfig", "TrainConfig", "FusionNet",
           "build_model", "__version__"]
