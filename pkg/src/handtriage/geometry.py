"""Axis-aligned bounding boxes: area, IoU, and layout conversion.

Two canonical layouts are used throughout the toolkit:

* ``BBox`` is corner-anchored in absolute pixels (x, y is the top-left corner).
* ``NormalizedBox`` is center-anchored in fractions of the image size, the
  layout used by YOLO text labels.

Coordinates are real-valued so the normalized round-trip is lossless;
rasterization only appears in test oracles.  All operations here are pure and
safe to call concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .errors import BoxBoundsError, FieldRangeError

__all__ = [
    "BBox",
    "ImageSize",
    "NormalizedBox",
    "DegenerateOverlapWarning",
    "area",
    "iou",
    "to_absolute",
    "to_normalized",
]

# Slack for floating-point drift when checking that a pixel box sits inside
# its image; one nanopixel is far below any meaningful coordinate.
_BOUNDS_TOL = 1e-9


class DegenerateOverlapWarning(UserWarning):
    """IoU was requested for two zero-area boxes; the comparison is vacuous."""


@dataclass(frozen=True)
class BBox:
    """Corner-anchored rectangle in absolute pixel coordinates."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not value >= 0:  # also rejects NaN
                raise ValueError(f"BBox.{name} must be >= 0, got {value!r}")

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h


@dataclass(frozen=True)
class ImageSize:
    """Pixel dimensions of an image."""

    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("width", "height"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"ImageSize.{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class NormalizedBox:
    """Center-anchored box in fractions of the image size (YOLO layout)."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "w", "h"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise FieldRangeError(name, value, "[0, 1]")


def area(b: BBox) -> float:
    """Box area in square pixels; degenerate boxes have area 0."""
    return b.w * b.h


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes, in [0, 1].

    When both boxes are degenerate the union is empty and the ratio is
    undefined; that vacuous comparison is defined as 0.0 and flagged with a
    ``DegenerateOverlapWarning``.
    """
    if a == b and area(a) > 0:
        return 1.0  # coincident boxes, exact by definition
    ix = min(a.right, b.right) - max(a.x, b.x)
    iy = min(a.bottom, b.bottom) - max(a.y, b.y)
    intersection = ix * iy if ix > 0 and iy > 0 else 0.0
    union = area(a) + area(b) - intersection
    if union <= 0:
        warnings.warn(
            "IoU of two zero-area boxes is undefined; returning 0.0",
            DegenerateOverlapWarning,
            stacklevel=2,
        )
        return 0.0
    # Corner arithmetic can overshoot area identities by an ulp or two
    # ((x + w) - x is not always w in floating point); keep the contract.
    return min(max(intersection / union, 0.0), 1.0)


def to_absolute(n: NormalizedBox, size: ImageSize) -> BBox:
    """Convert a normalized center-format box to absolute pixels.

    The result is clipped to the image bounds, so a box whose footprint
    sticks out of the frame loses the part outside it.
    """
    left = (n.cx - n.w / 2) * size.width
    right = (n.cx + n.w / 2) * size.width
    top = (n.cy - n.h / 2) * size.height
    bottom = (n.cy + n.h / 2) * size.height

    left = min(max(left, 0.0), float(size.width))
    right = min(max(right, 0.0), float(size.width))
    top = min(max(top, 0.0), float(size.height))
    bottom = min(max(bottom, 0.0), float(size.height))
    return BBox(left, top, right - left, bottom - top)


def to_normalized(b: BBox, size: ImageSize) -> NormalizedBox:
    """Convert an absolute pixel box to the normalized center format.

    Exact inverse of :func:`to_absolute` for boxes that lie inside the image.
    Boxes exceeding the image bounds are rejected; clip them first.
    """
    if b.right > size.width + _BOUNDS_TOL or b.bottom > size.height + _BOUNDS_TOL:
        raise BoxBoundsError(
            f"box (x={b.x}, y={b.y}, w={b.w}, h={b.h}) exceeds image bounds "
            f"{size.width}x{size.height}; clip before normalizing"
        )

    def _unit(v: float) -> float:
        return min(max(v, 0.0), 1.0)

    return NormalizedBox(
        cx=_unit((b.x + b.w / 2) / size.width),
        cy=_unit((b.y + b.h / 2) / size.height),
        w=_unit(b.w / size.width),
        h=_unit(b.h / size.height),
    )
