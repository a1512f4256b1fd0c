"""bsmkit: binaural signal matching with ILD-aware magnitude least squares."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Direction,
    DirectionGrid,
    FilterSet,
    FrequencyGrid,
    GridError,
    Method,
    TFKind,
    TransferFunctionSet,
    reconstruct,
)
from .design import DesignConfig, design_ls, design_magls  # noqa: E402
from .imagls import ImaglsConfig, train_imagls  # noqa: E402

__all__ = [
    "Direction",
    "DirectionGrid",
    "FilterSet",
    "FrequencyGrid",
    "GridError",
    "Method",
    "TFKind",
    "TransferFunctionSet",
    "reconstruct",
    "DesignConfig",
    "design_ls",
    "design_magls",
    "ImaglsConfig",
    "train_imagls",
]
