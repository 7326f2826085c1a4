"""Axis-aligned box and keypoint geometry used by graph construction.

Boxes follow the inclusive-exclusive convention: a point (x, y) is inside
box (x1, y1, x2, y2) iff x1 <= x < x2 and y1 <= y < y2. A point on the
right or bottom edge counts as outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from poserel.errors import InvalidInputError


@dataclass(frozen=True)
class Box:
    """Axis-aligned bounding box in pixel coordinates (x2 > x1, y2 > y1)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v) or v < 0:
                raise InvalidInputError(
                    f"box coordinates must be finite and >= 0, got {self!r}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidInputError(
                f"degenerate box: need x1 < x2 and y1 < y2, got {self!r}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Keypoint:
    """One skeleton keypoint: position, detector confidence, COCO slot 0..16."""

    x: float
    y: float
    confidence: float = 1.0
    index: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError(f"keypoint position must be finite, got {self!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(
                f"keypoint confidence must be in [0, 1], got {self.confidence}")
        if not 0 <= self.index <= 16:
            raise InvalidInputError(
                f"keypoint index must be in [0, 16], got {self.index}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes.

    Returns 0.0 for disjoint boxes; symmetric in its arguments. Degenerate
    boxes cannot be constructed, so the denominator is always positive.
    """
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def keypoint_hits_box(k: Keypoint, b: Box, dilation: float = 0.0) -> bool:
    """True iff the keypoint, dilated to a square of half-side `dilation`,
    overlaps the box.

    With dilation 0 this is the point-in-box test under the
    inclusive-exclusive convention: x1 <= k.x < x2 and y1 <= k.y < y2.
    """
    if dilation < 0:
        raise InvalidInputError(f"dilation must be >= 0, got {dilation}")
    return (k.x + dilation >= b.x1 and k.x - dilation < b.x2
            and k.y + dilation >= b.y1 and k.y - dilation < b.y2)


def normalized_distance(a: Keypoint, b: Keypoint,
                        image_w: float, image_h: float) -> float:
    """Euclidean distance between two keypoints divided by the image diagonal.

    For keypoints inside the image the result lies in [0, 1]; values are
    clamped to 1.0 as a guard against out-of-bounds inputs.
    """
    if image_w <= 0 or image_h <= 0:
        raise InvalidInputError(
            f"image dimensions must be positive, got {image_w}x{image_h}")
    d = math.hypot(a.x - b.x, a.y - b.y) / math.hypot(image_w, image_h)
    return min(d, 1.0)


def union_box(a: Box, b: Box) -> Box:
    """Smallest axis-aligned box containing both inputs."""
    return Box(min(a.x1, b.x1), min(a.y1, b.y1),
               max(a.x2, b.x2), max(a.y2, b.y2))
