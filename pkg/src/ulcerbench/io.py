"""Bit-exact file formats.

* probability maps -- SDPM: 16-byte header (magic ``SDPM``, format version
  u32, height u32, width u32, little-endian) followed by height*width
  32-bit little-endian IEEE-754 floats, row-major;
* masks -- 8-bit single-channel PNG with values {0, 255}, 255 = foreground;
* ground truth -- headered CSV ``image_id,xmin,ymin,xmax,ymax``; a row with
  all four coordinates empty declares an image with zero boxes;
* detections -- one JSON object per line with exactly the keys
  image_id/xmin/ymin/xmax/ymax/confidence, sorted by (image_id, descending
  confidence, box position);
* score samples -- one float per line, ``#`` starts a comment;
* dataset manifests -- headered CSV ``image_id,map_path,mask_path,height,width``
  (mask_path may be empty), image_ids unique.

All writers are deterministic (same value, same bytes; UTF-8, LF line
endings) and each reader rejects what its writer cannot produce, naming the
offending byte offset or line.  Probability-map payloads are stored at
float32 and widened to float64 on read; writing a map whose values are
float32-representable therefore round-trips exactly.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .preprocess import RgbImage
from .types import BBox, BinaryMask, Detection, FormatError, ProbMap

SDPM_MAGIC = b"SDPM"
SDPM_VERSION = 1
_SDPM_HEADER = struct.Struct("<4sIII")
MAX_PIXELS = 1 << 28

_GT_HEADER = "image_id,xmin,ymin,xmax,ymax"
_MANIFEST_HEADER = "image_id,map_path,mask_path,height,width"
_DET_KEYS = ("image_id", "xmin", "ymin", "xmax", "ymax", "confidence")


# ---------------------------------------------------------------- SDPM maps

def write_probmap(pmap: ProbMap, path) -> None:
    header = _SDPM_HEADER.pack(SDPM_MAGIC, SDPM_VERSION, pmap.height, pmap.width)
    payload = pmap.values.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def read_probmap(path) -> ProbMap:
    data = Path(path).read_bytes()
    if len(data) < _SDPM_HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes at offset 0)")
    magic, version, height, width = _SDPM_HEADER.unpack_from(data)
    if magic != SDPM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    if version != SDPM_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at byte 4")
    if height < 1 or width < 1:
        raise FormatError(f"{path}: bad dimensions {height}x{width} at byte 8")
    if height * width > MAX_PIXELS:
        raise FormatError(f"{path}: dimension overflow {height}x{width} at byte 8")
    expected = _SDPM_HEADER.size + 4 * height * width
    if len(data) < expected:
        raise FormatError(
            f"{path}: truncated payload ({len(data)} bytes, expected {expected})"
        )
    if len(data) > expected:
        raise FormatError(f"{path}: trailing bytes at offset {expected}")
    raw = np.frombuffer(data, dtype="<f4", offset=_SDPM_HEADER.size)
    values = raw.astype(np.float64)
    bad = ~((values >= 0.0) & (values <= 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise FormatError(
            f"{path}: value out of range at index {i} "
            f"(byte {_SDPM_HEADER.size + 4 * i}): {values[i]!r}"
        )
    return ProbMap(values.reshape(height, width))


# ----------------------------------------------------------------- mask PNG

def write_mask(mask: BinaryMask, path) -> None:
    img = Image.fromarray(mask.values * np.uint8(255), mode="L")
    img.save(Path(path), format="PNG")


def read_mask(path) -> BinaryMask:
    with Image.open(Path(path)) as img:
        if img.mode != "L":
            raise FormatError(f"{path}: mask PNG must be 8-bit grayscale, got mode {img.mode!r}")
        arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim != 2:
        raise FormatError(f"{path}: mask PNG must be single-channel")
    bad = ~np.isin(arr, (0, 255))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise FormatError(f"{path}: mask value at index {i} is {arr.flat[i]}, expected 0 or 255")
    return BinaryMask((arr == 255).astype(np.uint8))


# -------------------------------------------------------------- RGB images

def write_rgb_image(img: RgbImage, path) -> None:
    Image.fromarray(img.to_interleaved(), mode="RGB").save(Path(path), format="PNG")


def read_rgb_image(path) -> RgbImage:
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return RgbImage.from_interleaved(arr)


# ----------------------------------------------------------- ground truth

@dataclass(frozen=True, eq=False)
class GroundTruthTable:
    """Boxes per image; an image mapped to an empty tuple has zero wounds."""

    images: dict[str, tuple[BBox, ...]]
    warnings: tuple[str, ...] = field(default=())

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroundTruthTable):
            return NotImplemented
        return self.images == other.images

    @property
    def total_boxes(self) -> int:
        return sum(len(v) for v in self.images.values())

    def validate_dimensions(self, dims: Mapping[str, tuple[int, int]]) -> None:
        """Check every box fits its image's (height, width)."""
        for image_id, boxes in self.images.items():
            if image_id not in dims:
                continue
            h, w = dims[image_id]
            for box in boxes:
                if box.xmax > w or box.ymax > h:
                    raise FormatError(
                        f"box {box} of image {image_id!r} exceeds {h}x{w} bounds"
                    )


def write_ground_truth(table: GroundTruthTable, path) -> None:
    lines = [_GT_HEADER]
    for image_id in sorted(table.images):
        boxes = sorted(table.images[image_id], key=BBox.sort_key)
        if not boxes:
            lines.append(f"{image_id},,,,")
        for b in boxes:
            lines.append(f"{image_id},{b.xmin},{b.ymin},{b.xmax},{b.ymax}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_ground_truth(path) -> GroundTruthTable:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != _GT_HEADER:
        raise FormatError(f"{path}: line 1: expected header {_GT_HEADER!r}")
    images: dict[str, list[BBox]] = {}
    seen: set[tuple] = set()
    warnings = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path}: line {lineno}: expected 5 fields, got {len(parts)}")
        image_id = parts[0].strip()
        if not image_id:
            raise FormatError(f"{path}: line {lineno}: empty image_id")
        coords = [p.strip() for p in parts[1:]]
        if all(c == "" for c in coords):
            images.setdefault(image_id, [])
            continue
        try:
            xmin, ymin, xmax, ymax = (int(c) for c in coords)
        except ValueError:
            raise FormatError(
                f"{path}: line {lineno}: coordinates must be integers: {line!r}"
            ) from None
        try:
            box = BBox(xmin, ymin, xmax, ymax)
        except ValueError as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from None
        key = (image_id, xmin, ymin, xmax, ymax)
        if key in seen:
            warnings.append(f"line {lineno}: duplicate row {line!r} dropped")
            continue
        seen.add(key)
        images.setdefault(image_id, []).append(box)
    return GroundTruthTable(
        images={k: tuple(v) for k, v in images.items()},
        warnings=tuple(warnings),
    )


# ------------------------------------------------------------- detections

def _det_record_key(image_id: str, det: Detection):
    return (image_id, -det.confidence, *det.box.sort_key())


def write_detections(dets: Mapping[str, Sequence[Detection]], path) -> None:
    records = []
    for image_id, image_dets in dets.items():
        for det in image_dets:
            records.append((image_id, det))
    records.sort(key=lambda r: _det_record_key(*r))
    lines = []
    for image_id, det in records:
        lines.append(
            json.dumps(
                {
                    "confidence": det.confidence,
                    "image_id": image_id,
                    "xmax": det.box.xmax,
                    "xmin": det.box.xmin,
                    "ymax": det.box.ymax,
                    "ymin": det.box.ymin,
                },
                sort_keys=True,
                separators=(", ", ": "),
            )
        )
    Path(path).write_text(
        ("\n".join(lines) + "\n") if lines else "", encoding="utf-8", newline="\n"
    )


def parse_detections(text: str, source: str = "<text>") -> dict[str, list[Detection]]:
    """Parse detections from the line-delimited format; see read_detections."""
    out: dict[str, list[Detection]] = {}
    prev_key = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            raise FormatError(f"{source}: line {lineno}: blank line")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{source}: line {lineno}: invalid record: {exc}") from None
        if not isinstance(obj, dict) or sorted(obj) != sorted(_DET_KEYS):
            raise FormatError(
                f"{source}: line {lineno}: record must have exactly the keys {_DET_KEYS}"
            )
        image_id = obj["image_id"]
        if not isinstance(image_id, str) or not image_id:
            raise FormatError(f"{source}: line {lineno}: image_id must be a non-empty string")
        for k in ("xmin", "ymin", "xmax", "ymax"):
            if not isinstance(obj[k], int) or isinstance(obj[k], bool):
                raise FormatError(f"{source}: line {lineno}: {k} must be an integer")
        conf = obj["confidence"]
        if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not math.isfinite(conf):
            raise FormatError(f"{source}: line {lineno}: confidence must be a finite number")
        if not (0.0 <= conf <= 1.0):
            raise FormatError(
                f"{source}: line {lineno}: confidence out of range [0, 1]: {conf!r}"
            )
        try:
            det = Detection(
                box=BBox(obj["xmin"], obj["ymin"], obj["xmax"], obj["ymax"]),
                confidence=float(conf),
            )
        except ValueError as exc:
            raise FormatError(f"{source}: line {lineno}: {exc}") from None
        key = _det_record_key(image_id, det)
        if prev_key is not None and key < prev_key:
            raise FormatError(
                f"{source}: line {lineno}: records out of order "
                "(sorted by image_id, then descending confidence)"
            )
        prev_key = key
        out.setdefault(image_id, []).append(det)
    return out


def read_detections(path) -> dict[str, list[Detection]]:
    return parse_detections(Path(path).read_text(encoding="utf-8"), source=str(path))


# ------------------------------------------------------------ score samples

def write_scores(scores: Sequence[float], path) -> None:
    lines = [repr(float(s)) for s in scores]
    Path(path).write_text(
        ("\n".join(lines) + "\n") if lines else "", encoding="utf-8", newline="\n"
    )


def read_scores(path) -> list[float]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            value = float(body)
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: not a number: {body!r}") from None
        if not math.isfinite(value) or not (0.0 <= value <= 1.0):
            raise FormatError(f"{path}: line {lineno}: score out of [0, 1]: {value!r}")
        out.append(value)
    return out


# --------------------------------------------------------------- manifests

@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    map_path: str
    mask_path: str | None
    height: int
    width: int

    def __post_init__(self):
        if not self.image_id:
            raise FormatError("manifest record has empty image_id")
        if self.height < 1 or self.width < 1:
            raise FormatError(
                f"manifest record {self.image_id!r}: dimensions must be >= 1"
            )


def write_manifest(records: Sequence[ManifestRecord], path) -> None:
    lines = [_MANIFEST_HEADER]
    for r in sorted(records, key=lambda r: r.image_id):
        lines.append(
            f"{r.image_id},{r.map_path},{r.mask_path or ''},{r.height},{r.width}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_manifest(path) -> list[ManifestRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != _MANIFEST_HEADER:
        raise FormatError(f"{path}: line 1: expected header {_MANIFEST_HEADER!r}")
    records = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path}: line {lineno}: expected 5 fields, got {len(parts)}")
        image_id, map_path, mask_path, h_s, w_s = (p.strip() for p in parts)
        if image_id in seen:
            raise FormatError(f"{path}: line {lineno}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        try:
            height, width = int(h_s), int(w_s)
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: dimensions must be integers") from None
        try:
            records.append(
                ManifestRecord(
                    image_id=image_id,
                    map_path=map_path,
                    mask_path=mask_path or None,
                    height=height,
                    width=width,
                )
            )
        except FormatError as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from None
    return records


def resolve_manifest_path(manifest_path, entry_path: str) -> Path:
    """Relative manifest entries resolve against the manifest's directory."""
    p = Path(entry_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p
