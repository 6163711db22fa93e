"""Command-line entry point.

Subcommands: detect, eval, loss, gradcheck, compare, augment, serve.
Exit codes: 0 success, 1 warnings escalated by --strict, 2 usage/config/
format errors.

Configuration can come from a JSON file (--config, or the ULCERBENCH_CONFIG
environment variable) with sections "detect", "match", "loss_weights",
"focal", "smooth_eps", "augment", and "service"; individual flags override
file values.  Reports are canonical key-sorted JSON with LF endings and
carry a digest of the effective configuration; timestamps appear only with
--timestamps, so identical inputs yield identical output bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import _kernels
from .io import (
    read_detections,
    read_ground_truth,
    read_manifest,
    read_mask,
    read_probmap,
    read_rgb_image,
    read_scores,
    resolve_manifest_path,
    write_detections,
    write_mask,
    write_rgb_image,
)
from .losses import (
    DEFAULT_EPS,
    DEFAULT_FOCAL,
    DEFAULT_WEIGHTS,
    dice_loss,
    focal_loss,
    jaccard_loss,
    loss_gradient,
    seg_loss,
)
from .metrics import MatchConfig, evaluate_dataset
from .postprocess import DetectConfig, binarize, detect
from .preprocess import AugmentConfig, augment, pipeline_signature
from .service import OversizeSubmission, ScoringService, make_server
from .stats import SampleSet, welch_t_test
from .types import (
    BinaryMask,
    FocalParams,
    FormatError,
    LossWeights,
    ProbMap,
    SmoothEps,
    ValidationError,
)

GRADCHECK_ABS_FLOOR = 1e-8
GRADCHECK_TOLERANCE = 1e-4


def _load_config_file(args) -> dict:
    path = getattr(args, "config", None) or os.environ.get("ULCERBENCH_CONFIG")
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid config JSON: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: config root must be an object")
    return data


def _section(cfg_file: dict, name: str) -> dict:
    section = cfg_file.get(name, {})
    if not isinstance(section, dict):
        raise FormatError(f"config section {name!r} must be an object")
    return dict(section)


def _build(cls, section: dict, overrides: dict):
    section.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**section)
    except TypeError as exc:
        raise ValidationError(f"bad {cls.__name__} configuration: {exc}") from None


def _detect_config(cfg_file: dict, args) -> DetectConfig:
    return _build(
        DetectConfig,
        _section(cfg_file, "detect"),
        {
            "pixel_threshold": getattr(args, "pixel_threshold", None),
            "min_mean_confidence": getattr(args, "min_mean_confidence", None),
            "min_area": getattr(args, "min_area", None),
            "connectivity": getattr(args, "connectivity", None),
        },
    )


def _match_config(cfg_file: dict, args) -> MatchConfig:
    return _build(
        MatchConfig,
        _section(cfg_file, "match"),
        {
            "iou_threshold": getattr(args, "iou_threshold", None),
            "ap_interpolation": getattr(args, "interpolation", None),
        },
    )


def _parse_weights(text: str) -> LossWeights:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"--weights expects 'focal,dice,jaccard', got {text!r}")
    try:
        f, d, j = (float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"--weights values must be numbers: {text!r}") from None
    return LossWeights(focal=f, dice=d, jaccard=j)


def _loss_configs(cfg_file: dict, args) -> tuple[LossWeights, FocalParams, SmoothEps]:
    if getattr(args, "weights", None) is not None:
        weights = _parse_weights(args.weights)
    else:
        weights = _build(LossWeights, _section(cfg_file, "loss_weights"), {})
    focal = _build(
        FocalParams,
        _section(cfg_file, "focal"),
        {
            "alpha": getattr(args, "focal_alpha", None),
            "gamma": getattr(args, "focal_gamma", None),
            "clamp_delta": getattr(args, "clamp_delta", None),
        },
    )
    eps_value = getattr(args, "eps", None)
    if eps_value is None:
        eps_value = cfg_file.get("smooth_eps", DEFAULT_EPS.eps)
    return weights, focal, SmoothEps(eps_value)


def _config_digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.blake2b(blob.encode("utf-8"), digest_size=16).hexdigest()


def _emit_report(payload: dict, out_path, timestamps: bool) -> None:
    if timestamps:
        payload["generated_at"] = datetime.now(timezone.utc).isoformat()
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- detect

def _detect_one(task):
    map_path, image_id, dims, cfg = task
    pmap = read_probmap(map_path)
    if (pmap.height, pmap.width) != dims:
        raise FormatError(
            f"{map_path}: map is {pmap.height}x{pmap.width}, "
            f"manifest declares {dims[0]}x{dims[1]} for {image_id!r}"
        )
    return image_id, detect(pmap, cfg)


def cmd_detect(args) -> int:
    cfg_file = _load_config_file(args)
    dcfg = _detect_config(cfg_file, args)
    records = sorted(read_manifest(args.maps), key=lambda r: r.image_id)
    tasks = [
        (
            str(resolve_manifest_path(args.maps, r.map_path)),
            r.image_id,
            (r.height, r.width),
            dcfg,
        )
        for r in records
    ]
    jobs = max(1, args.jobs)
    if jobs == 1 or len(tasks) <= 1:
        results = [_detect_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_detect_one, tasks))
    dets = {image_id: image_dets for image_id, image_dets in results}
    write_detections(dets, args.out)
    total = sum(len(v) for v in dets.values())
    print(f"wrote {total} detections for {len(dets)} images to {args.out}")
    return 0


# ------------------------------------------------------------------ eval

def _mask_pair(task):
    image_id, map_path, mask_path, dims, pixel_threshold = task
    pmap = read_probmap(map_path)
    gt_mask = read_mask(mask_path)
    for name, thing in (("map", pmap), ("mask", gt_mask)):
        if (thing.height, thing.width) != dims:
            raise FormatError(
                f"{name} for {image_id!r} is {thing.height}x{thing.width}, "
                f"manifest declares {dims[0]}x{dims[1]}"
            )
    return image_id, (binarize(pmap, pixel_threshold), gt_mask)


def cmd_eval(args) -> int:
    cfg_file = _load_config_file(args)
    mcfg = _match_config(cfg_file, args)
    dcfg = _detect_config(cfg_file, args)
    dets = read_detections(args.pred)
    gt = read_ground_truth(args.gt)
    warnings = [f"{args.gt}: {w}" for w in gt.warnings]

    masks = None
    if args.masks:
        all_records = read_manifest(args.masks)
        gt.validate_dimensions({r.image_id: (r.height, r.width) for r in all_records})
        records = [r for r in all_records if r.mask_path]
        tasks = [
            (
                r.image_id,
                str(resolve_manifest_path(args.masks, r.map_path)),
                str(resolve_manifest_path(args.masks, r.mask_path)),
                (r.height, r.width),
                dcfg.pixel_threshold,
            )
            for r in sorted(records, key=lambda r: r.image_id)
        ]
        jobs = max(1, args.jobs)
        if jobs == 1 or len(tasks) <= 1:
            pairs = [_mask_pair(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                pairs = list(pool.map(_mask_pair, tasks))
        masks = dict(pairs)

    report = evaluate_dataset(dets, gt.images, masks, mcfg, unknown_ids=args.unknown_ids)
    payload = {
        "command": "eval",
        "config_digest": _config_digest(
            {"match": asdict(mcfg), "pixel_threshold": dcfg.pixel_threshold,
             "unknown_ids": args.unknown_ids}
        ),
        "report": report.to_dict(),
        "warnings": warnings,
    }
    _emit_report(payload, args.out, args.timestamps)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if warnings and args.strict:
        return 1
    return 0


# ------------------------------------------------------------------ loss

def cmd_loss(args) -> int:
    cfg_file = _load_config_file(args)
    weights, focal, eps = _loss_configs(cfg_file, args)
    pmap = read_probmap(args.map)
    mask = read_mask(args.mask)
    payload = {
        "command": "loss",
        "components": {
            "dice": dice_loss(pmap, mask, eps).value,
            "focal": focal_loss(pmap, mask, focal).value,
            "jaccard": jaccard_loss(pmap, mask, eps).value,
        },
        "composite": seg_loss(pmap, mask, weights, focal, eps).value,
        "config_digest": _config_digest(
            {"weights": asdict(weights), "focal": asdict(focal), "eps": eps.eps}
        ),
        "weights": asdict(weights),
    }
    _emit_report(payload, args.out, args.timestamps)
    return 0


# -------------------------------------------------------------- gradcheck

def _loss_value(kind, values, gt, weights, focal, eps) -> float:
    pred = ProbMap(values)
    if kind == "dice":
        return dice_loss(pred, gt, eps).value
    if kind == "jaccard":
        return jaccard_loss(pred, gt, eps).value
    if kind == "focal":
        return focal_loss(pred, gt, focal).value
    return seg_loss(pred, gt, weights, focal, eps).value


def _gradcheck_error(kind, pred, gt, weights, focal, eps, step) -> float:
    """Worst pixel of |analytic - central difference| / max(|fd|, floor/tol)."""
    analytic = loss_gradient(kind, pred, gt, weights, focal, eps).values
    worst = 0.0
    base = pred.values
    for i in range(base.size):
        bumped = base.copy()
        bumped.flat[i] = base.flat[i] + step
        hi = _loss_value(kind, bumped, gt, weights, focal, eps)
        bumped.flat[i] = base.flat[i] - step
        lo = _loss_value(kind, bumped, gt, weights, focal, eps)
        fd = (hi - lo) / (2.0 * step)
        denom = max(abs(fd), GRADCHECK_ABS_FLOOR / GRADCHECK_TOLERANCE)
        worst = max(worst, abs(analytic.flat[i] - fd) / denom)
    return worst


def run_gradcheck(trials: int, seed: int, size: int = 8, step: float = 1e-5) -> float:
    """Max normalized analytic-vs-finite-difference error over random inputs."""
    gen = np.random.default_rng(seed)
    weights, focal, eps = DEFAULT_WEIGHTS, DEFAULT_FOCAL, DEFAULT_EPS
    worst = 0.0
    for _ in range(trials):
        pred = ProbMap(gen.uniform(0.05, 0.95, (size, size)))
        gt = BinaryMask(gen.integers(0, 2, (size, size), dtype=np.uint8))
        for kind in ("dice", "jaccard", "focal", "seg"):
            worst = max(
                worst, _gradcheck_error(kind, pred, gt, weights, focal, eps, step)
            )
    return worst


def cmd_gradcheck(args) -> int:
    worst = run_gradcheck(args.trials, args.seed, args.size, args.step)
    print(
        f"max relative gradient error: {worst:.6e} "
        f"({args.trials} trials, size {args.size}x{args.size}, step {args.step:g})"
    )
    if worst < args.tolerance:
        return 0
    print(f"error: exceeds tolerance {args.tolerance:g}", file=sys.stderr)
    return 1


# --------------------------------------------------------------- compare

def cmd_compare(args) -> int:
    sample_a = SampleSet(label=Path(args.a).stem, scores=tuple(read_scores(args.a)))
    sample_b = SampleSet(label=Path(args.b).stem, scores=tuple(read_scores(args.b)))
    result = welch_t_test(sample_a, sample_b)
    from .stats import mean_var

    mean_a, var_a = mean_var(sample_a)
    mean_b, var_b = mean_var(sample_b)
    payload = {
        "a": {"label": sample_a.label, "mean": mean_a, "n": len(sample_a), "variance": var_a},
        "alpha": args.alpha,
        "b": {"label": sample_b.label, "mean": mean_b, "n": len(sample_b), "variance": var_b},
        "command": "compare",
        "degenerate": result.degenerate,
        "dof": result.dof,
        "p": result.p,
        "significant": result.p < args.alpha,
        "t": result.t if math.isfinite(result.t) else repr(result.t),
        "test": "welch-two-tailed",
    }
    _emit_report(payload, args.out, args.timestamps)
    return 0


# --------------------------------------------------------------- augment

def cmd_augment(args) -> int:
    cfg_file = _load_config_file(args)
    cfg = _build(AugmentConfig, _section(cfg_file, "augment"), {"seed": args.seed})
    img = read_rgb_image(args.image)
    mask = read_mask(args.mask)
    out_img, out_mask = augment(img, mask, cfg)
    write_rgb_image(out_img, args.out_image)
    write_mask(out_mask, args.out_mask)
    print(f"pipeline signature: {pipeline_signature(cfg)}")
    return 0


# ----------------------------------------------------------------- serve

def cmd_serve(args) -> int:
    cfg_file = _load_config_file(args)
    mcfg = _match_config(cfg_file, args)
    service_cfg = _section(cfg_file, "service")
    max_body = args.max_body_bytes or service_cfg.get("max_body_bytes", 16 << 20)
    gt = read_ground_truth(args.gt)
    service = ScoringService(gt, args.data_dir, mcfg, max_body_bytes=max_body)
    service.start_worker()
    server = make_server(service, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"scoring service on http://{host}:{port} (kernels: {_kernels.BACKEND})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        service.stop_worker()
    return 0


# ----------------------------------------------------------------- parser

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (or set ULCERBENCH_CONFIG)")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument(
        "--timestamps", action="store_true",
        help="include a generation timestamp in the report (off by default so reruns are byte-identical)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ulcerbench",
        description="Wound-detection evaluation toolkit: losses, mask-to-box "
        "post-processing, detection metrics, model comparison, and blind scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="probability maps -> thresholded detections")
    p.add_argument("--maps", required=True, help="dataset manifest CSV")
    p.add_argument("--out", required=True, help="output detections file")
    p.add_argument("--config", help="JSON config file (or set ULCERBENCH_CONFIG)")
    p.add_argument("--pixel-threshold", type=float, default=None,
                   help="binarization cut on map values (default: 0.5)")
    p.add_argument("--min-mean-confidence", type=float, default=None,
                   help="minimum region mean confidence, inclusive (default: 0.6)")
    p.add_argument("--min-area", type=int, default=None,
                   help="minimum region area in pixels, inclusive (default: 200)")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=None,
                   help="pixel adjacency for region formation (default: 8)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default: 1)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="detections + ground truth -> evaluation report")
    p.add_argument("--pred", required=True, help="detections file")
    p.add_argument("--gt", required=True, help="ground-truth CSV")
    p.add_argument("--masks", help="manifest CSV with map/mask paths for pixel metrics")
    p.add_argument("--iou-threshold", type=float, default=None,
                   help="box IoU matching threshold (default: 0.5)")
    p.add_argument("--interpolation", choices=("all-point", "11-point"), default=None,
                   help="average-precision interpolation (default: all-point)")
    p.add_argument("--pixel-threshold", type=float, default=None,
                   help="binarization cut for predicted masks (default: 0.5)")
    p.add_argument("--unknown-ids", choices=("error", "fp"), default="error",
                   help="policy for detections on unknown image ids (default: error)")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 when the evaluation produced warnings")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default: 1)")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss", help="map + mask -> component and composite losses")
    p.add_argument("--map", required=True, help="probability map (SDPM)")
    p.add_argument("--mask", required=True, help="ground-truth mask PNG")
    p.add_argument("--weights", default=None,
                   help="composite weights as 'focal,dice,jaccard' (default: 1,1,1)")
    p.add_argument("--focal-alpha", type=float, default=None,
                   help="focal class-balance weight (default: 0.25)")
    p.add_argument("--focal-gamma", type=float, default=None,
                   help="focal focusing exponent (default: 2)")
    p.add_argument("--clamp-delta", type=float, default=None,
                   help="probability clamp for the focal logs (default: 1e-7)")
    p.add_argument("--eps", type=float, default=None,
                   help="Dice/Jaccard smoothing constant (default: 1e-6)")
    _add_common(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", help="analytic-vs-finite-difference gradient audit")
    p.add_argument("--trials", type=int, default=100, help="random trials (default: 100)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p.add_argument("--size", type=int, default=8, help="grid side length (default: 8)")
    p.add_argument("--step", type=float, default=1e-5,
                   help="central-difference step (default: 1e-5)")
    p.add_argument("--tolerance", type=float, default=GRADCHECK_TOLERANCE,
                   help="max allowed normalized error (default: 1e-4)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare", help="two score files -> Welch t-test")
    p.add_argument("--a", required=True, help="first score-sample file")
    p.add_argument("--b", required=True, help="second score-sample file")
    p.add_argument("--alpha", type=float, default=0.05,
                   help="significance annotation level (default: 0.05)")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("augment", help="apply the seeded pipeline to an image/mask pair")
    p.add_argument("--image", required=True, help="input RGB image")
    p.add_argument("--mask", required=True, help="input mask PNG")
    p.add_argument("--out-image", required=True, help="output RGB image path")
    p.add_argument("--out-mask", required=True, help="output mask path")
    p.add_argument("--seed", type=int, default=None, help="pipeline seed override")
    p.add_argument("--config", help="JSON config file (or set ULCERBENCH_CONFIG)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("serve", help="run the blind scoring service")
    p.add_argument("--gt", required=True, help="hidden ground-truth CSV")
    p.add_argument("--data-dir", required=True, help="submission/event storage directory")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default: 127.0.0.1)")
    p.add_argument("--port", type=int, default=8330, help="bind port (default: 8330)")
    p.add_argument("--max-body-bytes", type=int, default=None,
                   help="submission size limit in bytes (default: 16 MiB)")
    p.add_argument("--iou-threshold", type=float, default=None,
                   help="box IoU matching threshold (default: 0.5)")
    p.add_argument("--interpolation", choices=("all-point", "11-point"), default=None,
                   help="average-precision interpolation (default: all-point)")
    p.add_argument("--config", help="JSON config file (or set ULCERBENCH_CONFIG)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ValidationError, FormatError, OversizeSubmission) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
