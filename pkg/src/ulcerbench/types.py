"""Core domain types shared by every other module.

All types validate their invariants at construction and are immutable
afterwards (array payloads are frozen via the writeable flag), so values can
be shared freely between threads and processes.

Conventions fixed here and relied on everywhere else:

* raster grids are row-major with the origin at the top-left corner,
  x growing rightwards and y growing downwards;
* bounding boxes are half-open: ``[xmin, xmax) x [ymin, ymax)`` in integer
  pixel coordinates, which keeps area and intersection arithmetic exact;
* confidences and losses are computed in float64 regardless of how image
  payloads are stored on disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ValidationError(ValueError):
    """An invariant of a domain type or operation was violated."""


class FormatError(ValueError):
    """A file does not conform to one of the on-disk formats."""


def _freeze(values: np.ndarray) -> np.ndarray:
    values.flags.writeable = False
    return values


def _check_grid(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, order="C")
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-d grid, got {arr.ndim} dimensions")
    h, w = arr.shape
    if h < 1 or w < 1:
        raise ValidationError(f"grid dimensions must be >= 1, got {h}x{w}")
    return arr


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-pixel confidence grid with every value in [0, 1] (float64)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _check_grid(self.values, np.float64)
        bad = ~((arr >= 0.0) & (arr <= 1.0))  # also catches NaN
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"value out of range at index {i}: {arr.flat[i]!r}"
            )
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def to_binary_mask(self) -> "BinaryMask":
        """Lossless conversion, valid only when all values are exactly 0 or 1."""
        if not np.isin(self.values, (0.0, 1.0)).all():
            raise ValidationError("probability map is not binary")
        return BinaryMask(self.values)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel {0, 1} grid (uint8)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        # validate before the uint8 cast so out-of-range ints cannot wrap
        if not np.isin(arr, (0, 1)).all():
            raise ValidationError("mask values must be 0 or 1")
        object.__setattr__(self, "values", _freeze(_check_grid(arr, np.uint8)))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def to_probmap(self) -> ProbMap:
        return ProbMap(self.values.astype(np.float64))


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned box, half-open: xmin/ymin inclusive, xmax/ymax exclusive."""

    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def __post_init__(self):
        for name in ("xmin", "ymin", "xmax", "ymax"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValidationError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.xmin < 0 or self.ymin < 0:
            raise ValidationError(f"box coordinates must be >= 0: {self}")
        if self.xmin >= self.xmax or self.ymin >= self.ymax:
            raise ValidationError(
                f"box must satisfy xmin < xmax and ymin < ymax: {self}"
            )

    def sort_key(self) -> tuple[int, int, int, int]:
        """Deterministic ordering key (top-left first, then bottom-right)."""
        return (self.ymin, self.xmin, self.ymax, self.xmax)


def bbox_area(b: BBox) -> int:
    """Pixel count covered by the box; always >= 1 for a valid box."""
    return (b.xmax - b.xmin) * (b.ymax - b.ymin)


def bbox_intersection(a: BBox, b: BBox) -> BBox | None:
    """Intersection box, or None when the boxes do not overlap."""
    xmin = max(a.xmin, b.xmin)
    ymin = max(a.ymin, b.ymin)
    xmax = min(a.xmax, b.xmax)
    ymax = min(a.ymax, b.ymax)
    if xmin >= xmax or ymin >= ymax:
        return None
    return BBox(xmin, ymin, xmax, ymax)


@dataclass(frozen=True)
class Detection:
    """A detected box plus its confidence score in [0, 1]."""

    box: BBox
    confidence: float

    def __post_init__(self):
        c = float(self.confidence)
        if not (0.0 <= c <= 1.0):
            raise ValidationError(f"confidence out of range [0, 1]: {c!r}")
        object.__setattr__(self, "confidence", c)

    def sort_key(self) -> tuple:
        """Ranking key: confidence descending, ties broken by box position."""
        return (-self.confidence, *self.box.sort_key())


@dataclass(frozen=True)
class LossWeights:
    """Non-negative mixing weights of the composite segmentation loss.

    Each weight scales the component it is named after.  The combination
    that worked best for training is dataset-dependent, so all three are
    plain configuration with (1, 1, 1) as the neutral default.
    """

    focal: float = 1.0
    dice: float = 1.0
    jaccard: float = 1.0

    def __post_init__(self):
        for name in ("focal", "dice", "jaccard"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ValidationError(f"weight {name} must be finite and >= 0, got {v!r}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class FocalParams:
    """Parameters of the binary focal loss.

    alpha balances the positive class, gamma focuses the loss on hard
    pixels, and clamp_delta floors probabilities away from {0, 1} so the
    logarithms stay finite.  Defaults follow the common detection-loss
    convention (alpha=0.25, gamma=2).
    """

    alpha: float = 0.25
    gamma: float = 2.0
    clamp_delta: float = 1e-7

    def __post_init__(self):
        a, g, d = float(self.alpha), float(self.gamma), float(self.clamp_delta)
        if not (0.0 < a < 1.0):
            raise ValidationError(f"alpha must lie in (0, 1), got {a!r}")
        if not np.isfinite(g) or g < 0.0:
            raise ValidationError(f"gamma must be finite and >= 0, got {g!r}")
        if not (0.0 < d < 1e-3):
            raise ValidationError(f"clamp_delta must lie in (0, 1e-3), got {d!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "clamp_delta", d)


@dataclass(frozen=True)
class SmoothEps:
    """Smoothing constant added to soft Dice/Jaccard denominators."""

    eps: float = 1e-6

    def __post_init__(self):
        e = float(self.eps)
        if not np.isfinite(e) or e <= 0.0:
            raise ValidationError(f"eps must be finite and > 0, got {e!r}")
        object.__setattr__(self, "eps", e)


def make_probmap(height: int, width: int, values: Sequence[float]) -> ProbMap:
    """Build a validated ProbMap from a flat row-major value sequence."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size != height * width:
        raise ValidationError(
            f"expected {height}x{width}={height * width} values, got {arr.size}"
        )
    return ProbMap(arr.reshape(height, width))


def make_binary_mask(height: int, width: int, values: Sequence[int]) -> BinaryMask:
    """Build a validated BinaryMask from a flat row-major value sequence."""
    arr = np.asarray(values).ravel()
    if arr.size != height * width:
        raise ValidationError(
            f"expected {height}x{width}={height * width} values, got {arr.size}"
        )
    return BinaryMask(arr.reshape(height, width))
