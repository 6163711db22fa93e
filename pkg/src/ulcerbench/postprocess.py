"""Probability map -> bounding-box inference pipeline.

Stages: binarize the map at a pixel threshold, group the 1-pixels into
connected regions, score each region by its mean confidence on the original
map, drop regions below the minimum mean confidence or minimum area, and
emit one detection per surviving region.

Default thresholds keep regions with mean confidence >= 0.6 and area >= 200
pixels; both cuts are inclusive.  The pixel-level binarization threshold
(default 0.5) is a separate, independently configurable cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import chain, repeat

import numpy as np

from . import _kernels
from .types import BBox, BinaryMask, Detection, ProbMap, ValidationError, _freeze

DEFAULT_PIXEL_THRESHOLD = 0.5
DEFAULT_MIN_MEAN_CONFIDENCE = 0.6
DEFAULT_MIN_AREA = 200
DEFAULT_CONNECTIVITY = 8


@dataclass(frozen=True)
class DetectConfig:
    """Thresholds and connectivity of the detection pipeline."""

    pixel_threshold: float = DEFAULT_PIXEL_THRESHOLD
    min_mean_confidence: float = DEFAULT_MIN_MEAN_CONFIDENCE
    min_area: int = DEFAULT_MIN_AREA
    connectivity: int = DEFAULT_CONNECTIVITY

    def __post_init__(self):
        if not (0.0 < self.pixel_threshold < 1.0):
            raise ValidationError(
                f"pixel_threshold must lie in (0, 1), got {self.pixel_threshold!r}"
            )
        if not (0.0 <= self.min_mean_confidence <= 1.0):
            raise ValidationError(
                f"min_mean_confidence must lie in [0, 1], got {self.min_mean_confidence!r}"
            )
        if int(self.min_area) < 1:
            raise ValidationError(f"min_area must be >= 1, got {self.min_area!r}")
        object.__setattr__(self, "min_area", int(self.min_area))
        if self.connectivity not in (4, 8):
            raise ValidationError(f"connectivity must be 4 or 8, got {self.connectivity!r}")


@dataclass(frozen=True, eq=False)
class Region:
    """A connected set of 1-pixels with its tight bounding box.

    coords holds the member pixels as an (N, 2) array of (x, y) pairs in
    raster order; mean_confidence is None until the region has been scored
    against a probability map.
    """

    coords: np.ndarray
    area: int
    bbox: BBox
    mean_confidence: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=np.int32)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise ValidationError("coords must be a non-empty (N, 2) array")
        if self.area != arr.shape[0]:
            raise ValidationError(f"area {self.area} != pixel count {arr.shape[0]}")
        object.__setattr__(self, "coords", _freeze(np.ascontiguousarray(arr)))

    @property
    def pixel_indices(self) -> frozenset[tuple[int, int]]:
        """Member pixels as a set of (x, y) tuples."""
        return frozenset((int(x), int(y)) for x, y in self.coords)


def binarize(pmap: ProbMap, pixel_threshold: float = DEFAULT_PIXEL_THRESHOLD) -> BinaryMask:
    """Pixelwise cut: output is 1 exactly where map value >= threshold."""
    return BinaryMask((pmap.values >= pixel_threshold).astype(np.uint8))


def connected_components(mask: BinaryMask, connectivity: int = DEFAULT_CONNECTIVITY) -> list[Region]:
    """Partition the 1-pixels into maximal connected regions (unscored).

    Output order is deterministic: by bbox ymin, then xmin, then area, with
    remaining ties broken by bbox corner and first-pixel scan order.
    """
    if connectivity not in (4, 8):
        raise ValidationError(f"connectivity must be 4 or 8, got {connectivity!r}")
    labels, count = _kernels.label_components(mask.values, connectivity)
    if count == 0:
        return []
    ys, xs = np.nonzero(labels)
    labs = labels[ys, xs]
    order = np.argsort(labs, kind="stable")  # raster order preserved per label
    ys, xs, labs = ys[order], xs[order], labs[order]
    starts = np.searchsorted(labs, np.arange(1, count + 2))
    regions = []
    for lab in range(count):
        lo, hi = starts[lab], starts[lab + 1]
        rx, ry = xs[lo:hi], ys[lo:hi]
        bbox = BBox(int(rx.min()), int(ry.min()), int(rx.max()) + 1, int(ry.max()) + 1)
        coords = np.column_stack((rx, ry)).astype(np.int32)
        regions.append(Region(coords=coords, area=int(hi - lo), bbox=bbox))
    regions.sort(key=lambda r: (r.bbox.ymin, r.bbox.xmin, r.area, r.bbox.ymax, r.bbox.xmax))
    return regions


def _region_values(region: Region, pmap: ProbMap) -> np.ndarray:
    xs = region.coords[:, 0]
    ys = region.coords[:, 1]
    if (xs < 0).any() or (ys < 0).any() or (xs >= pmap.width).any() or (ys >= pmap.height).any():
        raise ValidationError("region pixel outside map bounds")
    return pmap.values[ys, xs]


def region_confidence(region: Region, pmap: ProbMap) -> float:
    """Arithmetic mean of the map values over the region's pixels."""
    vals = _region_values(region, pmap)
    return math.fsum(vals.tolist()) / region.area


def score_regions(regions: list[Region], pmap: ProbMap) -> list[Region]:
    """Attach the mean confidence of each region, preserving order."""
    return [replace(r, mean_confidence=region_confidence(r, pmap)) for r in regions]


def _mean_at_least(vals: np.ndarray, threshold: float, mean: float) -> bool:
    # Fast path while clearly away from the threshold; at the boundary the
    # decision is made on the exact sum so a region whose true mean equals
    # the threshold is always kept (inclusive cut, no rounding wobble).
    if mean >= threshold + 1e-9:
        return True
    if mean <= threshold - 1e-9:
        return False
    n = vals.size
    return math.fsum(chain(vals.tolist(), repeat(-threshold, n))) >= 0.0


def filter_regions(
    regions: list[Region],
    config: DetectConfig,
    pmap: ProbMap | None = None,
) -> list[Region]:
    """Keep regions with mean confidence and area at or above the minima.

    Order is preserved.  When the probability map is supplied, regions whose
    stored mean lies within 1e-9 of the confidence threshold are re-decided
    on the exact pixel sum; without the map the stored float mean is
    compared directly.
    """
    kept = []
    for r in regions:
        if r.mean_confidence is None:
            raise ValidationError("regions must carry a mean confidence; score them first")
        if r.area < config.min_area:
            continue
        if pmap is not None:
            ok = _mean_at_least(
                _region_values(r, pmap), config.min_mean_confidence, r.mean_confidence
            )
        else:
            ok = r.mean_confidence >= config.min_mean_confidence
        if ok:
            kept.append(r)
    return kept


def detect(pmap: ProbMap, config: DetectConfig = DetectConfig()) -> list[Detection]:
    """Full pipeline: map -> regions -> thresholded, ranked detections.

    Detections are sorted by descending confidence with ties broken by box
    position, so the output order is reproducible byte for byte.
    """
    mask = binarize(pmap, config.pixel_threshold)
    regions = score_regions(connected_components(mask, config.connectivity), pmap)
    kept = filter_regions(regions, config, pmap)
    dets = [Detection(box=r.bbox, confidence=r.mean_confidence) for r in kept]
    dets.sort(key=Detection.sort_key)
    return dets
