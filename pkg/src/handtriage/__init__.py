"""Detector-agnostic hand-detection toolkit.

Evaluation (COCO-style 12-metric AP/AR reports), semi-automatic bootstrap
labeling around an external trainer, and forensic frame triage by largest
hand area, with an HTTP review service on top.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import HandTriageError
from .geometry import BBox, ImageSize, NormalizedBox, area, iou, to_absolute, to_normalized

__all__ = [
    "__version__",
    "HandTriageError",
    "BBox",
    "ImageSize",
    "NormalizedBox",
    "area",
    "iou",
    "to_absolute",
    "to_normalized",
]
