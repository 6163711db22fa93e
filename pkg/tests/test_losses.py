import math

import numpy as np
import pytest

import oracles
from ulcerbench.losses import (
    GradMap,
    dice_loss,
    focal_loss,
    jaccard_loss,
    loss_gradient,
    seg_loss,
)
from ulcerbench.metrics import pixel_f1, pixel_iou
from ulcerbench.types import (
    BinaryMask,
    FocalParams,
    LossWeights,
    ProbMap,
    SmoothEps,
    ValidationError,
)

EPS6 = SmoothEps(1e-6)
ONES4 = BinaryMask(np.ones((4, 4), dtype=np.uint8))


def _loss_fn(kind, gt, weights=None, fp=None, eps=None):
    weights = weights or LossWeights()
    fp = fp or FocalParams()
    eps = eps or SmoothEps()

    def fn(values):
        pred = ProbMap(values)
        if kind == "dice":
            return dice_loss(pred, gt, eps).value
        if kind == "jaccard":
            return jaccard_loss(pred, gt, eps).value
        if kind == "focal":
            return focal_loss(pred, gt, fp).value
        return seg_loss(pred, gt, weights, fp, eps).value

    return fn


def test_dice_identity_is_zero():
    pred = ProbMap(np.ones((4, 4)))
    assert dice_loss(pred, ONES4, EPS6).value == 0.0


def test_dice_disjoint():
    pred = ProbMap(np.zeros((4, 4)))
    assert dice_loss(pred, ONES4, EPS6).value == pytest.approx(0.9999999375000039, abs=1e-15)


def test_dice_uniform_half():
    # closed form (16 + eps) / (24 + eps)
    pred = ProbMap(np.full((4, 4), 0.5))
    expected = 1.0 - (16.0 + 1e-6) / (24.0 + 1e-6)
    assert dice_loss(pred, ONES4, EPS6).value == pytest.approx(expected, abs=1e-15)
    assert dice_loss(pred, ONES4, EPS6).value == pytest.approx(0.333333, abs=1e-5)


def test_jaccard_identity_and_disjoint():
    binary = BinaryMask((np.arange(16).reshape(4, 4) % 3 == 0).astype(np.uint8))
    assert jaccard_loss(binary.to_probmap(), binary, EPS6).value == 0.0
    assert jaccard_loss(ProbMap(np.zeros((4, 4))), ONES4, EPS6).value == pytest.approx(1.0, abs=1e-6)


def test_jaccard_uniform_half():
    pred = ProbMap(np.full((4, 4), 0.5))
    expected = 1.0 - (8.0 + 1e-6) / (16.0 + 1e-6)
    assert jaccard_loss(pred, ONES4, EPS6).value == pytest.approx(expected, abs=1e-15)
    assert jaccard_loss(pred, ONES4, EPS6).value == pytest.approx(0.5, abs=1e-6)


def test_focal_perfect_prediction_is_delta_order():
    gt = BinaryMask((np.arange(16).reshape(4, 4) % 2).astype(np.uint8))
    fp = FocalParams(alpha=0.25, gamma=2.0, clamp_delta=1e-7)
    assert focal_loss(gt.to_probmap(), gt, fp).value <= 0.25 * 1e-6


def test_focal_single_pixel_hand_value():
    fp = FocalParams(alpha=0.25, gamma=2.0, clamp_delta=1e-7)
    got = focal_loss(ProbMap([[0.5]]), BinaryMask([[1]]), fp).value
    assert got == pytest.approx(0.25 * 0.25 * math.log(2.0), abs=1e-15)


def test_focal_reduces_to_half_bce(rng):
    fp = FocalParams(alpha=0.5, gamma=0.0, clamp_delta=1e-7)
    pred = ProbMap(np.full((4, 4), 0.5))
    gt = BinaryMask(rng.integers(0, 2, (4, 4), dtype=np.uint8))
    assert focal_loss(pred, gt, fp).value == pytest.approx(0.5 * math.log(2.0), abs=1e-12)
    # general reduction: half of mean binary cross-entropy
    p = rng.uniform(0.05, 0.95, (6, 6))
    g = rng.integers(0, 2, (6, 6))
    bce = -(g * np.log(p) + (1 - g) * np.log(1 - p)).mean()
    got = focal_loss(ProbMap(p), BinaryMask(g.astype(np.uint8)), fp).value
    assert got == pytest.approx(0.5 * bce, rel=1e-9)


def test_seg_loss_weighting(rng):
    pred = ProbMap(rng.uniform(0.0, 1.0, (5, 5)))
    gt = BinaryMask(rng.integers(0, 2, (5, 5), dtype=np.uint8))
    fp = FocalParams(alpha=0.25, gamma=2.0)
    assert seg_loss(pred, gt, LossWeights(0, 0, 0), fp, EPS6).value == 0.0
    only_focal = seg_loss(pred, gt, LossWeights(1, 0, 0), fp, EPS6).value
    assert only_focal == focal_loss(pred, gt, fp).value
    combined = seg_loss(pred, gt, LossWeights(1, 1, 1), fp, EPS6).value
    expected = (
        focal_loss(pred, gt, fp).value
        + dice_loss(pred, gt, EPS6).value
        + jaccard_loss(pred, gt, EPS6).value
    )
    assert combined == expected


def test_seg_loss_linear_in_weights(rng):
    pred = ProbMap(rng.uniform(0.0, 1.0, (5, 5)))
    gt = BinaryMask(rng.integers(0, 2, (5, 5), dtype=np.uint8))
    w = LossWeights(0.3, 1.2, 0.7)
    w2 = LossWeights(0.6, 2.4, 1.4)
    a = seg_loss(pred, gt, w).value
    b = seg_loss(pred, gt, w2).value
    assert b == pytest.approx(2.0 * a, rel=1e-12)


def test_dimension_mismatch_raises():
    pred = ProbMap(np.zeros((2, 2)))
    gt = BinaryMask(np.zeros((3, 3), dtype=np.uint8))
    for fn in (dice_loss, jaccard_loss):
        with pytest.raises(ValidationError, match="does not match"):
            fn(pred, gt)
    with pytest.raises(ValidationError):
        focal_loss(pred, gt)
    with pytest.raises(ValidationError):
        loss_gradient("dice", pred, gt)


def test_gradient_dice_at_identity_matches_fd():
    pred = ProbMap(np.ones((4, 4)))
    analytic = loss_gradient("dice", pred, ONES4).values
    # closed form at p = g = 1: -1 / (32 + eps) per pixel
    assert analytic == pytest.approx(np.full((4, 4), -1.0 / (32.0 + 1e-6)), abs=1e-15)
    # finite differences need interior points; verify nearby instead
    interior = np.full((4, 4), 0.9)
    fd = oracles.finite_diff_grad(_loss_fn("dice", ONES4), interior)
    got = loss_gradient("dice", ProbMap(interior), ONES4).values
    assert oracles.grad_close(got, fd)


def test_gradient_seg_zero_weights_is_zero(rng):
    pred = ProbMap(rng.uniform(0.1, 0.9, (4, 4)))
    gt = BinaryMask(rng.integers(0, 2, (4, 4), dtype=np.uint8))
    grad = loss_gradient("seg", pred, gt, LossWeights(0, 0, 0))
    assert isinstance(grad, GradMap)
    assert (grad.values == 0.0).all()


def test_gradient_jaccard_random_matches_fd(rng):
    values = rng.uniform(0.05, 0.95, (8, 8))
    gt = BinaryMask(rng.integers(0, 2, (8, 8), dtype=np.uint8))
    analytic = loss_gradient("jaccard", ProbMap(values), gt).values
    fd = oracles.finite_diff_grad(_loss_fn("jaccard", gt), values)
    assert oracles.grad_close(analytic, fd)


@pytest.mark.parametrize("kind", ["dice", "jaccard", "focal", "seg"])
def test_gradient_all_kinds_match_fd(kind, rng):
    for _ in range(5):
        values = rng.uniform(0.05, 0.95, (8, 8))
        gt = BinaryMask(rng.integers(0, 2, (8, 8), dtype=np.uint8))
        analytic = loss_gradient(kind, ProbMap(values), gt).values
        fd = oracles.finite_diff_grad(_loss_fn(kind, gt), values)
        assert oracles.grad_close(analytic, fd), f"{kind} gradient mismatch"


def test_binary_consistency_with_pixel_metrics(rng):
    eps = SmoothEps(1e-12)
    for _ in range(50):
        pred = BinaryMask(rng.integers(0, 2, (16, 16), dtype=np.uint8))
        gt = BinaryMask(rng.integers(0, 2, (16, 16), dtype=np.uint8))
        if gt.values.sum() == 0:
            continue
        assert dice_loss(pred.to_probmap(), gt, eps).value == pytest.approx(
            1.0 - pixel_f1(pred, gt), abs=1e-9
        )
        assert jaccard_loss(pred.to_probmap(), gt, eps).value == pytest.approx(
            1.0 - pixel_iou(pred, gt), abs=1e-9
        )


def test_permutation_invariance(rng):
    values = rng.uniform(0.0, 1.0, (6, 6))
    g = rng.integers(0, 2, (6, 6), dtype=np.uint8)
    perm = rng.permutation(36)
    values_p = values.ravel()[perm].reshape(6, 6)
    g_p = g.ravel()[perm].reshape(6, 6)
    for kind in ("dice", "jaccard", "focal", "seg"):
        a = _loss_fn(kind, BinaryMask(g))(values)
        b = _loss_fn(kind, BinaryMask(g_p))(values_p)
        assert a == pytest.approx(b, rel=1e-12)


def test_positive_pixel_monotonicity(rng):
    # raising p_i where g_i = 1 never increases dice/jaccard/focal
    values = rng.uniform(0.1, 0.8, (5, 5))
    g = np.zeros((5, 5), dtype=np.uint8)
    g[2, 3] = 1
    gt = BinaryMask(g)
    for kind in ("dice", "jaccard", "focal"):
        fn = _loss_fn(kind, gt)
        base = fn(values)
        bumped = values.copy()
        bumped[2, 3] += 0.15
        assert fn(bumped) <= base + 1e-15
