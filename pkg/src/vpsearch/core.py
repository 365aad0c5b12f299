"""Geometry, image, and detection primitives shared by every other module.

Boxes use half-open continuous coordinates: a box (x1, y1, x2, y2) covers
the region [x1, x2) x [y1, y2), so its area is (x2 - x1) * (y2 - y1).
A pixel at integer position (row, col) belongs to a box iff its center
(col + 0.5, row + 0.5) lies inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in half-open continuous pixel coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidInputError(f"box coordinates must be finite, got {coords}")
        if min(coords) < 0:
            raise InvalidInputError(f"box coordinates must be >= 0, got {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidInputError(f"box must satisfy x1 < x2 and y1 < y2, got {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def pixel_mask(self, height: int, width: int) -> np.ndarray:
        """Boolean (H, W) mask of pixels whose centers fall inside the box."""
        rows = np.arange(height) + 0.5
        cols = np.arange(width) + 0.5
        inside_y = (rows >= self.y1) & (rows < self.y2)
        inside_x = (cols >= self.x1) & (cols < self.x2)
        return np.outer(inside_y, inside_x)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint, symmetric."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Image:
    """An H x W x 3 8-bit pixel grid; the attribution subject."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidInputError(f"image must be HxWx3, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError("image must have height >= 1 and width >= 1")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise InvalidInputError("channel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Detection:
    """One detector output: a box with per-category confidences."""

    box: BBox
    scores: dict[str, float]

    def __post_init__(self):
        if not self.scores:
            raise InvalidInputError("detection scores map must be non-empty")
        for cat, s in self.scores.items():
            if not (isinstance(s, (int, float)) and math.isfinite(s) and 0.0 <= s <= 1.0):
                raise InvalidInputError(f"confidence for {cat!r} must be in [0, 1], got {s!r}")

    def score(self, category: str) -> float:
        return float(self.scores.get(category, 0.0))

    def best_score(self) -> float:
        return float(max(self.scores.values()))


@dataclass(frozen=True)
class DetectionSet:
    """The black-box detector's output; may be empty (fully masked input)."""

    detections: tuple[Detection, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)


@dataclass(frozen=True)
class ExplanationTarget:
    """The (target box, category) pair being explained."""

    target_box: BBox
    category: str
