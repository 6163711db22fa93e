"""ulcerbench: evaluation toolkit for segmentation-based wound detection.

Everything downstream of a segmentation network's probability maps lives
here: the composite training loss with verified gradients, the map-to-box
inference pipeline, detection metrics, statistical model comparison, bit-
exact file formats, a CLI, and a blind competition-style scoring service.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .losses import (
    GradMap,
    LossValue,
    dice_loss,
    focal_loss,
    jaccard_loss,
    loss_gradient,
    seg_loss,
)
from .metrics import (
    EvalReport,
    MatchConfig,
    average_precision,
    box_iou,
    detection_prf,
    evaluate_dataset,
    match_detections,
    pixel_f1,
    pixel_iou,
)
from .postprocess import (
    DetectConfig,
    Region,
    binarize,
    connected_components,
    detect,
    filter_regions,
    region_confidence,
)
from .preprocess import (
    AugmentConfig,
    NormConfig,
    RgbImage,
    augment,
    normalize,
    pipeline_signature,
)
from .stats import SampleSet, TTestResult, mean_var, student_t_sf, welch_t_test
from .types import (
    BBox,
    BinaryMask,
    Detection,
    FocalParams,
    FormatError,
    LossWeights,
    ProbMap,
    SmoothEps,
    ValidationError,
    bbox_area,
    bbox_intersection,
    make_binary_mask,
    make_probmap,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "BBox",
    "BinaryMask",
    "Detection",
    "DetectConfig",
    "EvalReport",
    "FocalParams",
    "FormatError",
    "GradMap",
    "KERNEL_BACKEND",
    "LossValue",
    "LossWeights",
    "MatchConfig",
    "NormConfig",
    "ProbMap",
    "Region",
    "RgbImage",
    "SampleSet",
    "SmoothEps",
    "TTestResult",
    "ValidationError",
    "augment",
    "average_precision",
    "bbox_area",
    "bbox_intersection",
    "binarize",
    "box_iou",
    "connected_components",
    "detect",
    "detection_prf",
    "dice_loss",
    "evaluate_dataset",
    "filter_regions",
    "focal_loss",
    "jaccard_loss",
    "loss_gradient",
    "make_binary_mask",
    "make_probmap",
    "match_detections",
    "mean_var",
    "normalize",
    "pipeline_signature",
    "pixel_f1",
    "pixel_iou",
    "region_confidence",
    "seg_loss",
    "student_t_sf",
    "welch_t_test",
]
