"""Pixel-level and detection-level evaluation.

Pixel metrics (F1, IoU) compare binary masks.  Detection metrics follow the
usual challenge protocol: detections are ranked by confidence, greedily
matched to the highest-IoU unmatched ground-truth box at or above the IoU
threshold, and precision/recall/F1 plus average precision are computed from
the pooled true/false-positive labels.  The task is single-class, so the
reported mAP equals AP; both fields are kept for report compatibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .types import (
    BBox,
    BinaryMask,
    Detection,
    ValidationError,
    bbox_area,
    bbox_intersection,
)

AP_ALL_POINT = "all-point"
AP_11_POINT = "11-point"


@dataclass(frozen=True)
class MatchConfig:
    """Detection-matching protocol parameters."""

    iou_threshold: float = 0.5
    ap_interpolation: str = AP_ALL_POINT

    def __post_init__(self):
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValidationError(
                f"iou_threshold must lie in (0, 1], got {self.iou_threshold!r}"
            )
        if self.ap_interpolation not in (AP_ALL_POINT, AP_11_POINT):
            raise ValidationError(
                f"ap_interpolation must be {AP_ALL_POINT!r} or {AP_11_POINT!r}, "
                f"got {self.ap_interpolation!r}"
            )


DEFAULT_MATCH = MatchConfig()


def _check_mask_dims(pred: BinaryMask, gt: BinaryMask) -> None:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValidationError(
            f"prediction mask {pred.height}x{pred.width} does not match "
            f"ground truth {gt.height}x{gt.width}"
        )


def _mask_counts(pred: BinaryMask, gt: BinaryMask) -> tuple[int, int, int]:
    p = pred.values != 0
    g = gt.values != 0
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    return tp, fp, fn


def pixel_f1(pred: BinaryMask, gt: BinaryMask) -> float:
    """2*TP / (2*TP + FP + FN); defined as 1 when both masks are empty."""
    _check_mask_dims(pred, gt)
    tp, fp, fn = _mask_counts(pred, gt)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def pixel_iou(pred: BinaryMask, gt: BinaryMask) -> float:
    """|pred & gt| / |pred | gt|; defined as 1 when both masks are empty."""
    _check_mask_dims(pred, gt)
    tp, fp, fn = _mask_counts(pred, gt)
    union = tp + fp + fn
    return 1.0 if union == 0 else tp / union


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area of two boxes, in [0, 1]."""
    inter = bbox_intersection(a, b)
    if inter is None:
        return 0.0
    ia = bbox_area(inter)
    return ia / (bbox_area(a) + bbox_area(b) - ia)


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one image's detections against its GT boxes.

    ranked holds the detections in evaluation order (confidence descending,
    position tie-break); labels[i] is True when ranked[i] is a true positive.
    """

    ranked: tuple[Detection, ...]
    labels: tuple[bool, ...]
    unmatched_gt: int


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[BBox],
    cfg: MatchConfig = DEFAULT_MATCH,
) -> MatchResult:
    """Greedy confidence-ordered matching.

    Each detection takes the highest-IoU still-unmatched GT box provided the
    IoU reaches the threshold; each GT box is matched at most once.  An IoU
    tie selects the earliest GT box in the given sequence.
    """
    ranked = sorted(dets, key=Detection.sort_key)
    taken = [False] * len(gts)
    labels = []
    for det in ranked:
        best_iou = 0.0
        best_j = -1
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            iou = box_iou(det.box, gt)
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0 and best_iou >= cfg.iou_threshold:
            taken[best_j] = True
            labels.append(True)
        else:
            labels.append(False)
    return MatchResult(tuple(ranked), tuple(labels), unmatched_gt=taken.count(False))


def detection_prf(
    dets: Sequence[Detection],
    gts: Sequence[BBox],
    cfg: MatchConfig = DEFAULT_MATCH,
) -> tuple[float, float, float]:
    """(precision, recall, F1); P is 0 with no detections, R is 1 with no GT."""
    res = match_detections(dets, gts, cfg)
    tp = sum(res.labels)
    return _prf_from_counts(tp, len(res.labels) - tp, len(gts))


def _prf_from_counts(tp: int, fp: int, total_gt: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / total_gt if total_gt > 0 else 1.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return precision, recall, f1


def average_precision(
    labels: Sequence[bool],
    num_gt: int,
    cfg: MatchConfig = DEFAULT_MATCH,
) -> float:
    """AP of a ranked TP/FP label sequence against num_gt ground truths.

    all-point: area under the precision envelope max_{r' >= r} P(r') over
    recall.  11-point: mean of the envelope sampled at recall levels
    0.0, 0.1, ..., 1.0.  With zero ground truths the AP is 1 for an empty
    ranking and 0 otherwise.
    """
    if num_gt < 0:
        raise ValidationError(f"num_gt must be >= 0, got {num_gt}")
    if num_gt == 0:
        return 1.0 if len(labels) == 0 else 0.0
    if len(labels) == 0:
        return 0.0

    tp = 0
    precisions = []
    recalls = []
    for k, lab in enumerate(labels, start=1):
        tp += 1 if lab else 0
        precisions.append(tp / k)
        recalls.append(tp / num_gt)

    if cfg.ap_interpolation == AP_11_POINT:
        total = []
        for i in range(11):
            level = i / 10
            best = 0.0
            for p, r in zip(precisions, recalls):
                if r >= level and p > best:
                    best = p
            total.append(best)
        return math.fsum(total) / 11.0

    n = len(labels)
    suffix_max = [0.0] * (n + 1)
    for k in range(n - 1, -1, -1):
        suffix_max[k] = max(suffix_max[k + 1], precisions[k])
    terms = []
    prev_recall = 0.0
    for k in range(n):
        if labels[k]:
            terms.append((recalls[k] - prev_recall) * suffix_max[k])
            prev_recall = recalls[k]
    return math.fsum(terms)


@dataclass(frozen=True)
class ImageEval:
    """Per-image slice of the evaluation."""

    image_id: str
    n_detections: int
    n_gt: int
    tp: int
    fp: int
    fn: int
    pixel_f1: float | None = None
    pixel_iou: float | None = None

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "n_detections": self.n_detections,
            "n_gt": self.n_gt,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "pixel_f1": self.pixel_f1,
            "pixel_iou": self.pixel_iou,
        }


@dataclass(frozen=True)
class EvalReport:
    """Dataset-level evaluation: pooled detection metrics plus optional
    per-image-averaged pixel metrics."""

    det_precision: float
    det_recall: float
    det_f1: float
    ap: float
    map_score: float
    tp: int
    fp: int
    fn: int
    total_gt: int
    n_images: int
    pixel_f1: float | None = None
    pixel_iou: float | None = None
    per_image: tuple[ImageEval, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "det_precision": self.det_precision,
            "det_recall": self.det_recall,
            "det_f1": self.det_f1,
            "ap": self.ap,
            "map": self.map_score,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "total_gt": self.total_gt,
            "n_images": self.n_images,
            "pixel_f1": self.pixel_f1,
            "pixel_iou": self.pixel_iou,
            "per_image": [im.to_dict() for im in self.per_image],
        }


def evaluate_dataset(
    detections: Mapping[str, Sequence[Detection]],
    ground_truth: Mapping[str, Sequence[BBox]],
    masks: Mapping[str, tuple[BinaryMask, BinaryMask]] | None = None,
    cfg: MatchConfig = DEFAULT_MATCH,
    unknown_ids: str = "error",
) -> EvalReport:
    """Score a dataset.

    ground_truth defines the image universe (an image with no wounds maps to
    an empty sequence).  Detection counts are pooled globally and AP is
    computed over the global confidence ranking; pixel metrics, when
    (pred_mask, gt_mask) pairs are supplied, are averaged per image.

    unknown_ids selects the policy for detections whose image_id is not in
    the ground truth: "error" rejects the input, "fp" counts them as false
    positives (the blind-scoring policy).
    """
    if not ground_truth:
        raise ValidationError("no images")
    if unknown_ids not in ("error", "fp"):
        raise ValidationError(f"unknown_ids must be 'error' or 'fp', got {unknown_ids!r}")

    unknown = sorted(set(detections) - set(ground_truth))
    if unknown and unknown_ids == "error":
        raise ValidationError(f"detections reference unknown image ids: {unknown[:5]}")
    if masks is not None:
        bad = sorted(set(masks) - set(ground_truth))
        if bad:
            raise ValidationError(f"masks reference unknown image ids: {bad[:5]}")

    image_ids = sorted(set(ground_truth) | set(unknown))
    global_rank = []  # (det_sort_key, image_id, label)
    per_image = []
    tp = fp = 0
    total_gt = 0
    pixel_f1s = []
    pixel_ious = []

    for image_id in image_ids:
        gts = sorted(ground_truth.get(image_id, ()), key=BBox.sort_key)
        dets = detections.get(image_id, ())
        res = match_detections(dets, gts, cfg)
        img_tp = sum(res.labels)
        img_fp = len(res.labels) - img_tp
        tp += img_tp
        fp += img_fp
        total_gt += len(gts)
        for det, label in zip(res.ranked, res.labels):
            global_rank.append(((-det.confidence, image_id, det.box.sort_key()), label))

        pf1 = piou = None
        if masks is not None and image_id in masks:
            pred_mask, gt_mask = masks[image_id]
            pf1 = pixel_f1(pred_mask, gt_mask)
            piou = pixel_iou(pred_mask, gt_mask)
            pixel_f1s.append(pf1)
            pixel_ious.append(piou)
        per_image.append(
            ImageEval(
                image_id=image_id,
                n_detections=len(res.labels),
                n_gt=len(gts),
                tp=img_tp,
                fp=img_fp,
                fn=len(gts) - img_tp,
                pixel_f1=pf1,
                pixel_iou=piou,
            )
        )

    global_rank.sort(key=lambda item: item[0])
    ap = average_precision([label for _, label in global_rank], total_gt, cfg)
    precision, recall, f1 = _prf_from_counts(tp, fp, total_gt)
    return EvalReport(
        det_precision=precision,
        det_recall=recall,
        det_f1=f1,
        ap=ap,
        map_score=ap,
        tp=tp,
        fp=fp,
        fn=total_gt - tp,
        total_gt=total_gt,
        n_images=len(image_ids),
        pixel_f1=(math.fsum(pixel_f1s) / len(pixel_f1s)) if pixel_f1s else None,
        pixel_iou=(math.fsum(pixel_ious) / len(pixel_ious)) if pixel_ious else None,
        per_image=tuple(per_image),
    )
