"""Multipath cluster identification, tracking, and statistics for
multi-link distributed MIMO channels."""

__version__ = "0.1.0"

from .geometry import (InteractionResult, MpcRecord, PanelGeometry, PointCloud, Ray,
                       SPEED_OF_LIGHT)
from .mcd import McdContext, McdValue

__all__ = [
    "__version__",
    "SPEED_OF_LIGHT",
    "InteractionResult",
    "MpcRecord",
    "McdContext",
    "McdValue",
    "PanelGeometry",
    "PointCloud",
    "Ray",
]
