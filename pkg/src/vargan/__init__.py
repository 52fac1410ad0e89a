"""Landmark-conditioned GAN trainer with an auxiliary regressor, numerical
theory oracle, synthetic sprite-face dataset, and evaluation suite."""

from .arch import ArchConfig
from .losses import CbiganHyper, VarganHyper
from .training import TrainerConfig

__version__ = "0.1.0"
__all__ = ["ArchConfig", "VarganHyper", "CbiganHyper", "TrainerConfig", "__version__"]
