"""Predict component shifts after pick-and-place with epsilon-SVR."""

__version__ = "0.1.0"

from .domain import BUILTIN_SPECS, ComponentSpec, FeatureRow, PasteDeposit, PlacementRecord
from .svr import KernelSpec, SvrModel, TrainConfig, predict, train

__all__ = [
    "BUILTIN_SPECS", "ComponentSpec", "FeatureRow", "PasteDeposit", "PlacementRecord",
    "KernelSpec", "SvrModel", "TrainConfig", "predict", "train",
]
