"""Composite segmentation loss and its three components, with analytic
gradients with respect to the prediction map.

With prediction pixels p_i, ground truth g_i in {0, 1}, N pixels, smoothing
eps, and q_i = clamp(p_i, delta, 1 - delta):

    dice    = 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)
    jaccard = 1 - (sum(p*g) + eps) / (sum(p) + sum(g) - sum(p*g) + eps)
    focal   = -(1/N) * sum( g * a * (1-q)**gamma * ln(q)
                          + (1-g) * (1-a) * q**gamma * ln(1-q) )
    composite = w.focal * focal + w.dice * dice + w.jaccard * jaccard

The soft (probability-weighted) Dice/Jaccard forms keep the losses
differentiable; the gradients below are the exact derivatives of these
closed forms and are cross-checked against central finite differences in
the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _kernels
from .types import (
    BinaryMask,
    FocalParams,
    LossWeights,
    ProbMap,
    SmoothEps,
    ValidationError,
    _check_grid,
    _freeze,
)

LossKind = Literal["dice", "jaccard", "focal", "seg"]

DEFAULT_WEIGHTS = LossWeights()
DEFAULT_FOCAL = FocalParams()
DEFAULT_EPS = SmoothEps()


@dataclass(frozen=True)
class LossValue:
    """A finite, non-negative scalar loss."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or v < 0.0:
            raise ValidationError(f"loss must be finite and >= 0, got {v!r}")
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class GradMap:
    """Per-pixel d(loss)/d(p_i) grid, same shape as the prediction."""

    values: np.ndarray

    def __post_init__(self):
        arr = _check_grid(self.values, np.float64)
        if not np.isfinite(arr).all():
            i = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValidationError(f"non-finite gradient at index {i}")
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _check_dims(pred: ProbMap, gt: BinaryMask) -> None:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValidationError(
            f"prediction {pred.height}x{pred.width} does not match "
            f"ground truth {gt.height}x{gt.width}"
        )


def dice_loss(pred: ProbMap, gt: BinaryMask, eps: SmoothEps = DEFAULT_EPS) -> LossValue:
    """Soft Dice loss: one minus the smoothed F-measure of the overlap."""
    _check_dims(pred, gt)
    sum_p, sum_g, sum_pg = _kernels.overlap_sums(pred.values, gt.values)
    return LossValue(1.0 - (2.0 * sum_pg + eps.eps) / (sum_p + sum_g + eps.eps))


def jaccard_loss(pred: ProbMap, gt: BinaryMask, eps: SmoothEps = DEFAULT_EPS) -> LossValue:
    """Soft Jaccard loss: one minus the smoothed intersection-over-union."""
    _check_dims(pred, gt)
    sum_p, sum_g, sum_pg = _kernels.overlap_sums(pred.values, gt.values)
    union = sum_p + sum_g - sum_pg
    return LossValue(1.0 - (sum_pg + eps.eps) / (union + eps.eps))


def focal_loss(pred: ProbMap, gt: BinaryMask, fp: FocalParams = DEFAULT_FOCAL) -> LossValue:
    """Pixel-averaged binary focal loss.

    With gamma = 0 and alpha = 0.5 this reduces to one half of the mean
    binary cross-entropy (up to the clamp).
    """
    _check_dims(pred, gt)
    value, _ = _kernels.focal_value_grad(
        pred.values, gt.values, fp.alpha, fp.gamma, fp.clamp_delta, False
    )
    return LossValue(value)


def seg_loss(
    pred: ProbMap,
    gt: BinaryMask,
    w: LossWeights = DEFAULT_WEIGHTS,
    fp: FocalParams = DEFAULT_FOCAL,
    eps: SmoothEps = DEFAULT_EPS,
) -> LossValue:
    """Weighted sum of the focal, Dice, and Jaccard losses."""
    _check_dims(pred, gt)
    return LossValue(
        w.focal * focal_loss(pred, gt, fp).value
        + w.dice * dice_loss(pred, gt, eps).value
        + w.jaccard * jaccard_loss(pred, gt, eps).value
    )


def _dice_grad(pred: ProbMap, gt: BinaryMask, eps: SmoothEps) -> np.ndarray:
    sum_p, sum_g, sum_pg = _kernels.overlap_sums(pred.values, gt.values)
    g = gt.values.astype(np.float64)
    denom = sum_p + sum_g + eps.eps
    return -(2.0 * g * denom - (2.0 * sum_pg + eps.eps)) / (denom * denom)


def _jaccard_grad(pred: ProbMap, gt: BinaryMask, eps: SmoothEps) -> np.ndarray:
    sum_p, sum_g, sum_pg = _kernels.overlap_sums(pred.values, gt.values)
    g = gt.values.astype(np.float64)
    denom = sum_p + sum_g - sum_pg + eps.eps
    numer = sum_pg + eps.eps
    # d(intersection)/dp = g, d(union)/dp = 1 - g
    return -(g * denom - numer * (1.0 - g)) / (denom * denom)


def _focal_grad(pred: ProbMap, gt: BinaryMask, fp: FocalParams) -> np.ndarray:
    _, grad = _kernels.focal_value_grad(
        pred.values, gt.values, fp.alpha, fp.gamma, fp.clamp_delta, True
    )
    return grad


def loss_gradient(
    kind: LossKind,
    pred: ProbMap,
    gt: BinaryMask,
    w: LossWeights = DEFAULT_WEIGHTS,
    fp: FocalParams = DEFAULT_FOCAL,
    eps: SmoothEps = DEFAULT_EPS,
) -> GradMap:
    """Analytic gradient of the requested loss with respect to each pixel.

    Pixels in the focal clamp region (p <= delta or p >= 1 - delta) carry a
    zero focal-gradient contribution by definition of the clamp.
    """
    _check_dims(pred, gt)
    if kind == "dice":
        grad = _dice_grad(pred, gt, eps)
    elif kind == "jaccard":
        grad = _jaccard_grad(pred, gt, eps)
    elif kind == "focal":
        grad = _focal_grad(pred, gt, fp)
    elif kind == "seg":
        grad = (
            w.focal * _focal_grad(pred, gt, fp)
            + w.dice * _dice_grad(pred, gt, eps)
            + w.jaccard * _jaccard_grad(pred, gt, eps)
        )
    else:
        raise ValidationError(f"unknown loss kind: {kind!r}")
    return GradMap(grad)
