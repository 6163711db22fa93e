from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ulcerbench.metrics import (
    MatchConfig,
    average_precision,
    box_iou,
    detection_prf,
    evaluate_dataset,
    match_detections,
    pixel_f1,
    pixel_iou,
)
from ulcerbench.types import BBox, BinaryMask, Detection, ValidationError


def _mask(bits):
    return BinaryMask(np.array(bits, dtype=np.uint8))


def test_pixel_f1_examples():
    a = _mask([[1, 1], [0, 0]])
    assert pixel_f1(a, a) == 1.0
    assert pixel_f1(a, _mask([[0, 0], [1, 1]])) == 0.0
    # TP=100, FP=100, FN=0
    pred = _mask(np.ones((10, 20)))
    gt = _mask(np.hstack([np.ones((10, 10)), np.zeros((10, 10))]))
    assert pixel_f1(pred, gt) == pytest.approx(200 / 300)


def test_pixel_iou_examples():
    a = _mask([[1, 0], [0, 1]])
    assert pixel_iou(a, a) == 1.0
    assert pixel_iou(a, _mask([[0, 1], [1, 0]])) == 0.0
    pred = np.zeros((20, 20), dtype=np.uint8)
    pred[0:10, 0:10] = 1
    gt = np.zeros((20, 20), dtype=np.uint8)
    gt[5:15, 0:10] = 1  # intersection 50, union 150
    assert pixel_iou(_mask(pred), _mask(gt)) == pytest.approx(1 / 3)


def test_pixel_metrics_both_empty_is_one():
    empty = _mask(np.zeros((4, 4)))
    assert pixel_f1(empty, empty) == 1.0
    assert pixel_iou(empty, empty) == 1.0


def test_pixel_metrics_dimension_mismatch():
    with pytest.raises(ValidationError):
        pixel_f1(_mask(np.zeros((2, 2))), _mask(np.zeros((3, 3))))


@given(st.integers(0, 2**24 - 1), st.integers(0, 2**24 - 1))
@settings(max_examples=60, deadline=None)
def test_f1_iou_relation(bits_pred, bits_gt):
    pred = _mask([[int(c) for c in f"{bits_pred:024b}"[i * 6 : (i + 1) * 6]] for i in range(4)])
    gt = _mask([[int(c) for c in f"{bits_gt:024b}"[i * 6 : (i + 1) * 6]] for i in range(4)])
    f1 = pixel_f1(pred, gt)
    iou = pixel_iou(pred, gt)
    assert f1 == pytest.approx(2 * iou / (1 + iou), abs=1e-12)


def test_box_iou_examples():
    a = BBox(0, 0, 10, 10)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, BBox(20, 20, 30, 30)) == 0.0
    assert box_iou(a, BBox(5, 0, 15, 10)) == pytest.approx(1 / 3)


def test_box_iou_symmetry(rng):
    for _ in range(100):
        c = rng.integers(0, 20, size=8)
        a = BBox(int(c[0]), int(c[1]), int(c[0] + c[2] + 1), int(c[1] + c[3] + 1))
        b = BBox(int(c[4]), int(c[5]), int(c[4] + c[6] + 1), int(c[5] + c[7] + 1))
        assert box_iou(a, b) == box_iou(b, a)


def test_match_single_overlapping_detection():
    gt = [BBox(0, 0, 10, 10)]
    dets = [Detection(BBox(0, 0, 10, 9), 0.8)]  # IoU 0.9
    res = match_detections(dets, gt)
    assert res.labels == (True,)
    assert res.unmatched_gt == 0


def test_match_double_detection_is_penalized():
    gt = [BBox(0, 0, 10, 10)]
    dets = [Detection(BBox(0, 0, 10, 10), 0.9), Detection(BBox(0, 0, 10, 10), 0.8)]
    res = match_detections(dets, gt)
    assert res.labels == (True, False)


def test_match_below_threshold_is_fp():
    gt = [BBox(0, 0, 10, 10)]
    dets = [Detection(BBox(6, 0, 16, 10), 0.9)]  # IoU = 4/16 = 0.25
    res = match_detections(dets, gt, MatchConfig(iou_threshold=0.5))
    assert res.labels == (False,)
    assert res.unmatched_gt == 1


def test_detection_prf_examples():
    gt = [BBox(0, 0, 10, 10)]
    perfect = [Detection(BBox(0, 0, 10, 10), 1.0)]
    assert detection_prf(perfect, gt) == (1.0, 1.0, 1.0)
    assert detection_prf([], gt) == (0.0, 0.0, 0.0)
    double = [Detection(BBox(0, 0, 10, 10), 0.9), Detection(BBox(0, 0, 10, 10), 0.8)]
    p, r, f1 = detection_prf(double, gt)
    assert (p, r) == (0.5, 1.0)
    assert f1 == pytest.approx(2 / 3)


def test_average_precision_examples():
    assert average_precision([True], 1) == 1.0
    assert average_precision([True, False], 1) == 1.0
    assert average_precision([False, True], 1) == 0.5
    assert average_precision([], 3) == 0.0
    assert average_precision([], 0) == 1.0
    assert average_precision([False], 0) == 0.0


@pytest.mark.parametrize("interpolation", ["all-point", "11-point"])
def test_average_precision_matches_bruteforce_exhaustive(interpolation):
    cfg = MatchConfig(ap_interpolation=interpolation)
    for n_det in range(5):
        for n_gt in range(4):
            for bits in product([False, True], repeat=n_det):
                if sum(bits) > n_gt:
                    continue
                got = average_precision(list(bits), n_gt, cfg)
                want = float(oracles.ap_bruteforce(bits, n_gt, interpolation))
                assert got == pytest.approx(want, abs=1e-12), (bits, n_gt)


def test_confidence_scaling_leaves_metrics_unchanged(rng):
    gt = {"img": [BBox(0, 0, 10, 10), BBox(20, 20, 40, 40)]}
    dets = [
        Detection(BBox(0, 0, 10, 10), 0.9),
        Detection(BBox(21, 20, 40, 40), 0.7),
        Detection(BBox(50, 50, 60, 60), 0.8),
    ]
    base = evaluate_dataset({"img": dets}, gt)
    for c in (0.5, 0.25, 1.0):
        scaled = [Detection(d.box, d.confidence * c) for d in dets]
        rep = evaluate_dataset({"img": scaled}, gt)
        assert rep.det_f1 == base.det_f1
        assert rep.ap == base.ap


def test_unmatched_extra_detection_never_helps():
    gt = {"img": [BBox(0, 0, 10, 10)]}
    dets = [Detection(BBox(0, 0, 10, 10), 0.9)]
    base = evaluate_dataset({"img": dets}, gt)
    extra = dets + [Detection(BBox(50, 50, 60, 60), 0.1)]
    rep = evaluate_dataset({"img": extra}, gt)
    assert rep.det_precision <= base.det_precision
    assert rep.det_recall == base.det_recall


def test_evaluate_dataset_perfect_two_images():
    gt = {"a": [BBox(0, 0, 10, 10)], "b": [BBox(5, 5, 25, 25)]}
    dets = {
        "a": [Detection(BBox(0, 0, 10, 10), 1.0)],
        "b": [Detection(BBox(5, 5, 25, 25), 0.9)],
    }
    rep = evaluate_dataset(dets, gt)
    assert rep.det_f1 == 1.0
    assert rep.ap == 1.0
    assert rep.map_score == 1.0
    assert (rep.tp, rep.fp, rep.fn) == (2, 0, 0)
    assert rep.tp + rep.fn == rep.total_gt


def test_evaluate_dataset_rejects_empty():
    with pytest.raises(ValidationError, match="no images"):
        evaluate_dataset({}, {})


def test_evaluate_dataset_pooled_counts():
    gt = {"a": [BBox(0, 0, 10, 10)], "b": [BBox(0, 0, 10, 10)]}
    dets = {
        "a": [Detection(BBox(0, 0, 10, 10), 0.9)],  # TP
        "b": [Detection(BBox(40, 40, 50, 50), 0.8)],  # FP
    }
    rep = evaluate_dataset(dets, gt)
    assert (rep.det_precision, rep.det_recall, rep.det_f1) == (0.5, 0.5, 0.5)


def test_evaluate_dataset_unknown_id_policies():
    gt = {"a": [BBox(0, 0, 10, 10)]}
    dets = {
        "a": [Detection(BBox(0, 0, 10, 10), 0.9)],
        "ghost": [Detection(BBox(0, 0, 10, 10), 0.8)],
    }
    with pytest.raises(ValidationError, match="unknown image ids"):
        evaluate_dataset(dets, gt)
    rep = evaluate_dataset(dets, gt, unknown_ids="fp")
    assert (rep.tp, rep.fp) == (1, 1)


def test_evaluate_dataset_pixel_metrics_averaged():
    gt = {"a": [], "b": []}
    ones = _mask(np.ones((4, 4)))
    zeros = _mask(np.zeros((4, 4)))
    masks = {"a": (ones, ones), "b": (zeros, ones)}
    rep = evaluate_dataset({}, gt, masks=masks)
    assert rep.pixel_f1 == pytest.approx((1.0 + 0.0) / 2)
    assert rep.pixel_iou == pytest.approx(0.5)
    by_id = {im.image_id: im for im in rep.per_image}
    assert by_id["a"].pixel_f1 == 1.0
    assert by_id["b"].pixel_f1 == 0.0


def test_match_config_validation():
    with pytest.raises(ValidationError):
        MatchConfig(iou_threshold=0.0)
    with pytest.raises(ValidationError):
        MatchConfig(ap_interpolation="spline")
