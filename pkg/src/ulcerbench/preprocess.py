"""Input preparation: intensity normalization and the seeded augmentation
pipeline applied identically to an image and its mask.

Augmentation runs in two stages with a fixed order:

* photometric (image only): contrast, brightness, hue/saturation, gaussian
  noise, box blur -- chained in float64 on the [0, 255] scale and quantized
  once (round half up) at the end;
* geometric (image and mask): crop/zoom, horizontal flip, vertical flip,
  rotation, perspective -- composed into a single inverse coordinate map
  evaluated at output pixel centers, sampled nearest-neighbor in one pass,
  with out-of-frame pixels filled with zeros.  The output canvas keeps the
  input dimensions.

Every random decision is a pure function of (seed, transform stream, index)
through the splitmix64 generator in rng.py, so results are reproducible
byte for byte and transforms draw independently of one another.

The inverse map of each output pixel center (fx, fy) = (x + 0.5, y + 0.5),
applying the enabled stages in this order:

    perspective:  (fx, fy) -> H . (fx, fy, 1), projectively normalized
    rotation:     fx' = cx + cos(T) dx + sin(T) dy,
                  fy' = cy - sin(T) dx + cos(T) dy,
                  with (dx, dy) = (fx - cx, fy - cy), center (w/2, h/2)
    vertical flip:   fy -> h - fy
    horizontal flip: fx -> w - fx
    crop/zoom:    fx -> x0 + fx * (cw / w),  fy -> y0 + fy * (ch / h)

and finally the source pixel is (floor(fx), floor(fy)) when inside bounds.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields

import numpy as np

from . import rng
from .types import BinaryMask, ValidationError, _freeze

# stream ids of the draw streams, one per transform
_S_CONTRAST = 1
_S_BRIGHTNESS = 2
_S_HUESAT = 3
_S_NOISE_SIGMA = 4
_S_NOISE_CHANNEL = (5, 6, 7)
_S_BLUR = 8
_S_CROP = 9
_S_FLIP_H = 10
_S_FLIP_V = 11
_S_ROTATION = 12
_S_PERSPECTIVE = 13

IMAGENET_MEANS = (0.485, 0.456, 0.406)
IMAGENET_STDS = (0.229, 0.224, 0.225)


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three-channel image stored as (3, height, width) uint8 planes."""

    planes: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.planes)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValidationError(f"expected (3, h, w) planes, got shape {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValidationError("image dimensions must be >= 1")
        if arr.dtype.kind not in "ui" or arr.min() < 0 or arr.max() > 255:
            raise ValidationError("image values must be integers in [0, 255]")
        object.__setattr__(self, "planes", _freeze(np.ascontiguousarray(arr, dtype=np.uint8)))

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.planes, other.planes)

    @classmethod
    def from_interleaved(cls, arr) -> "RgbImage":
        """Build from an (h, w, 3) array, the usual decoded-image layout."""
        arr = np.asarray(arr)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValidationError(f"expected (h, w, 3) array, got shape {arr.shape}")
        return cls(np.moveaxis(arr, 2, 0))

    def to_interleaved(self) -> np.ndarray:
        return np.moveaxis(self.planes, 0, 2).copy()


@dataclass(frozen=True)
class NormConfig:
    """Channel normalization: scale to [0, 1], subtract per-channel means,
    optionally divide by per-channel stds.  Defaults are the conventional
    ImageNet statistics; apply_std is off by default (zero-centering only)."""

    channel_means: tuple[float, float, float] = IMAGENET_MEANS
    channel_stds: tuple[float, float, float] = IMAGENET_STDS
    apply_std: bool = False

    def __post_init__(self):
        means = tuple(float(m) for m in self.channel_means)
        stds = tuple(float(s) for s in self.channel_stds)
        # mean 0 is allowed: it turns zero-centering off for that channel
        if len(means) != 3 or not all(0.0 <= m < 1.0 for m in means):
            raise ValidationError(f"channel_means must be three values in [0, 1): {means}")
        if len(stds) != 3 or not all(0.0 < s <= 1.0 for s in stds):
            raise ValidationError(f"channel_stds must be three values in (0, 1]: {stds}")
        object.__setattr__(self, "channel_means", means)
        object.__setattr__(self, "channel_stds", stds)


def normalize(img: RgbImage, cfg: NormConfig = NormConfig()) -> np.ndarray:
    """Float64 (3, h, w) planes: v/255 - mean_c, then optionally / std_c."""
    out = img.planes.astype(np.float64) / 255.0
    for c in range(3):
        out[c] -= cfg.channel_means[c]
        if cfg.apply_std:
            out[c] /= cfg.channel_stds[c]
    return out


def _check_range(name, rng_pair, lo_ok=None, hi_ok=None):
    lo, hi = float(rng_pair[0]), float(rng_pair[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ValidationError(f"{name} range must be ordered and finite: {rng_pair}")
    if lo_ok is not None and lo < lo_ok:
        raise ValidationError(f"{name} range must be >= {lo_ok}: {rng_pair}")
    if hi_ok is not None and hi > hi_ok:
        raise ValidationError(f"{name} range must be <= {hi_ok}: {rng_pair}")
    return (lo, hi)


@dataclass(frozen=True)
class AugmentConfig:
    """Per-transform enable flags, ranges, and the pipeline seed.

    All defaults are disabled / mild; none of them is a dataset-derived
    truth.  Flip transforms are controlled purely by their probability.
    """

    contrast: bool = False
    contrast_range: tuple[float, float] = (0.8, 1.2)
    brightness: bool = False
    brightness_range: tuple[float, float] = (-0.1, 0.1)
    hue_saturation: bool = False
    hue_shift_range: tuple[float, float] = (-18.0, 18.0)
    saturation_range: tuple[float, float] = (0.7, 1.3)
    gaussian_noise: bool = False
    noise_sigma_range: tuple[float, float] = (0.0, 0.05)
    blur: bool = False
    blur_radius_range: tuple[int, int] = (1, 2)
    crop: bool = False
    crop_fraction_range: tuple[float, float] = (0.8, 1.0)
    flip_horizontal_prob: float = 0.0
    flip_vertical_prob: float = 0.0
    rotation: bool = False
    rotation_degrees_range: tuple[float, float] = (-15.0, 15.0)
    perspective: bool = False
    perspective_jitter: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "contrast_range", _check_range("contrast", self.contrast_range, lo_ok=0.0))
        object.__setattr__(self, "brightness_range", _check_range("brightness", self.brightness_range, lo_ok=-1.0, hi_ok=1.0))
        object.__setattr__(self, "hue_shift_range", _check_range("hue_shift", self.hue_shift_range))
        object.__setattr__(self, "saturation_range", _check_range("saturation", self.saturation_range, lo_ok=0.0))
        object.__setattr__(self, "noise_sigma_range", _check_range("noise_sigma", self.noise_sigma_range, lo_ok=0.0))
        lo, hi = self.blur_radius_range
        if int(lo) != lo or int(hi) != hi or lo < 0 or lo > hi:
            raise ValidationError(f"blur_radius range must be ordered ints >= 0: {self.blur_radius_range}")
        object.__setattr__(self, "blur_radius_range", (int(lo), int(hi)))
        crop_rng = _check_range("crop_fraction", self.crop_fraction_range, hi_ok=1.0)
        if crop_rng[0] <= 0.0:
            raise ValidationError(f"crop_fraction range must be > 0: {crop_rng}")
        object.__setattr__(self, "crop_fraction_range", crop_rng)
        for name in ("flip_horizontal_prob", "flip_vertical_prob"):
            p = float(getattr(self, name))
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {p!r}")
            object.__setattr__(self, name, p)
        object.__setattr__(self, "rotation_degrees_range", _check_range("rotation_degrees", self.rotation_degrees_range))
        j = float(self.perspective_jitter)
        if not (0.0 <= j < 0.5):
            raise ValidationError(f"perspective_jitter must lie in [0, 0.5), got {j!r}")
        object.__setattr__(self, "perspective_jitter", j)
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass(frozen=True)
class GeomParams:
    """Drawn geometric-transform parameters for one augmentation call."""

    width: int
    height: int
    crop: tuple[int, int, int, int] | None = None  # x0, y0, cw, ch
    flip_h: bool = False
    flip_v: bool = False
    angle_deg: float | None = None
    homography: tuple[float, ...] | None = None  # row-major 3x3, output -> source

    @property
    def is_identity(self) -> bool:
        return (
            self.crop is None
            and not self.flip_h
            and not self.flip_v
            and self.angle_deg is None
            and self.homography is None
        )


def _uniform_in(seed, stream, index, lo, hi) -> float:
    return lo + rng.unit_uniform(seed, stream, index) * (hi - lo)


def _solve_homography(dst_quad, src_quad) -> tuple[float, ...]:
    """3x3 projective map taking each dst corner to its src corner (h22=1)."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for k, ((dx, dy), (sx, sy)) in enumerate(zip(dst_quad, src_quad)):
        a[2 * k] = [dx, dy, 1.0, 0.0, 0.0, 0.0, -sx * dx, -sx * dy]
        b[2 * k] = sx
        a[2 * k + 1] = [0.0, 0.0, 0.0, dx, dy, 1.0, -sy * dx, -sy * dy]
        b[2 * k + 1] = sy
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"degenerate perspective corners: {exc}") from exc
    return (*(float(v) for v in h), 1.0)


def draw_geometry(cfg: AugmentConfig, seed: int, width: int, height: int) -> GeomParams:
    """Draw the geometric parameters for one (image, mask) pair."""
    crop = None
    if cfg.crop:
        f = _uniform_in(seed, _S_CROP, 0, *cfg.crop_fraction_range)
        cw = min(width, max(1, math.floor(f * width + 0.5)))
        ch = min(height, max(1, math.floor(f * height + 0.5)))
        if cw < 1 or ch < 1:
            raise ValidationError(f"degenerate crop window {cw}x{ch}")
        x0 = min(width - cw, math.floor(rng.unit_uniform(seed, _S_CROP, 1) * (width - cw + 1)))
        y0 = min(height - ch, math.floor(rng.unit_uniform(seed, _S_CROP, 2) * (height - ch + 1)))
        if (x0, y0, cw, ch) != (0, 0, width, height):
            crop = (x0, y0, cw, ch)

    flip_h = rng.unit_uniform(seed, _S_FLIP_H, 0) < cfg.flip_horizontal_prob
    flip_v = rng.unit_uniform(seed, _S_FLIP_V, 0) < cfg.flip_vertical_prob

    angle = None
    if cfg.rotation:
        drawn = _uniform_in(seed, _S_ROTATION, 0, *cfg.rotation_degrees_range)
        if drawn != 0.0:
            angle = drawn

    homography = None
    if cfg.perspective and cfg.perspective_jitter > 0.0:
        j = cfg.perspective_jitter
        u = [rng.unit_uniform(seed, _S_PERSPECTIVE, k) for k in range(8)]
        jit_x = [(2.0 * u[2 * k] - 1.0) * j * width for k in range(4)]
        jit_y = [(2.0 * u[2 * k + 1] - 1.0) * j * height for k in range(4)]
        w, h = float(width), float(height)
        dst = ((0.0, 0.0), (w, 0.0), (w, h), (0.0, h))
        src = tuple((cx + jit_x[k], cy + jit_y[k]) for k, (cx, cy) in enumerate(dst))
        homography = _solve_homography(dst, src)

    return GeomParams(
        width=width,
        height=height,
        crop=crop,
        flip_h=flip_h,
        flip_v=flip_v,
        angle_deg=angle,
        homography=homography,
    )


def inverse_map(params: GeomParams, fx, fy):
    """Map output pixel-center coordinates back to source coordinates.

    Works elementwise on numpy arrays; the formulas are spelled out in the
    module docstring and mirrored by the per-pixel oracle in the test suite.
    """
    w = float(params.width)
    h = float(params.height)
    if params.homography is not None:
        h00, h01, h02, h10, h11, h12, h20, h21, h22 = params.homography
        denom = h20 * fx + h21 * fy + h22
        fx, fy = (h00 * fx + h01 * fy + h02) / denom, (h10 * fx + h11 * fy + h12) / denom
    if params.angle_deg is not None:
        t = math.radians(params.angle_deg)
        cos_t, sin_t = math.cos(t), math.sin(t)
        cx, cy = w / 2.0, h / 2.0
        dx = fx - cx
        dy = fy - cy
        fx, fy = cx + cos_t * dx + sin_t * dy, cy - sin_t * dx + cos_t * dy
    if params.flip_v:
        fy = h - fy
    if params.flip_h:
        fx = w - fx
    if params.crop is not None:
        x0, y0, cw, ch = params.crop
        fx = x0 + fx * (cw / w)
        fy = y0 + fy * (ch / h)
    return fx, fy


def _resample_plane(plane: np.ndarray, params: GeomParams) -> np.ndarray:
    h, w = plane.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    fx, fy = inverse_map(params, xs + 0.5, ys + 0.5)
    ix = np.floor(fx).astype(np.int64)
    iy = np.floor(fy).astype(np.int64)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros_like(plane)
    out[valid] = plane[iy[valid], ix[valid]]
    return out


def _quantize(planes: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(planes, 0.0, 255.0) + 0.5).astype(np.uint8)


def _rgb_to_hsv(rgb: np.ndarray):
    r, g, b = rgb
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    delta = maxc - minc
    sat = np.where(maxc > 0.0, delta / np.where(maxc > 0.0, maxc, 1.0), 0.0)
    dsafe = np.where(delta > 0.0, delta, 1.0)
    hue_r = np.mod((g - b) / dsafe, 6.0)
    hue_g = (b - r) / dsafe + 2.0
    hue_b = (r - g) / dsafe + 4.0
    hue = np.where(
        delta == 0.0, 0.0, np.where(maxc == r, hue_r, np.where(maxc == g, hue_g, hue_b))
    )
    return hue * 60.0, sat, maxc


def _hsv_to_rgb(hue: np.ndarray, sat: np.ndarray, val: np.ndarray) -> np.ndarray:
    hp = np.mod(hue / 60.0, 6.0)
    c = val * sat
    x = c * (1.0 - np.abs(np.mod(hp, 2.0) - 1.0))
    m = val - c
    sector = np.floor(hp).astype(np.int64) % 6
    zeros = np.zeros_like(c)
    r = np.choose(sector, [c, x, zeros, zeros, x, c])
    g = np.choose(sector, [x, c, c, x, zeros, zeros])
    b = np.choose(sector, [zeros, zeros, x, c, c, x])
    return np.stack([r + m, g + m, b + m])


def _box_blur(plane: np.ndarray, radius: int) -> np.ndarray:
    """Mean filter over a (2r+1)^2 window, truncated at the borders."""
    h, w = plane.shape
    integ = np.zeros((h + 1, w + 1))
    integ[1:, 1:] = plane.cumsum(axis=0).cumsum(axis=1)
    y0 = np.maximum(np.arange(h) - radius, 0)
    y1 = np.minimum(np.arange(h) + radius + 1, h)
    x0 = np.maximum(np.arange(w) - radius, 0)
    x1 = np.minimum(np.arange(w) + radius + 1, w)
    total = (
        integ[y1[:, None], x1[None, :]]
        - integ[y0[:, None], x1[None, :]]
        - integ[y1[:, None], x0[None, :]]
        + integ[y0[:, None], x0[None, :]]
    )
    area = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return total / area


def _apply_photometric(planes: np.ndarray, cfg: AugmentConfig, seed: int) -> np.ndarray:
    if cfg.contrast:
        factor = _uniform_in(seed, _S_CONTRAST, 0, *cfg.contrast_range)
        planes = (planes - 127.5) * factor + 127.5
    if cfg.brightness:
        delta = _uniform_in(seed, _S_BRIGHTNESS, 0, *cfg.brightness_range)
        planes = planes + delta * 255.0
    if cfg.hue_saturation:
        hue_shift = _uniform_in(seed, _S_HUESAT, 0, *cfg.hue_shift_range)
        sat_scale = _uniform_in(seed, _S_HUESAT, 1, *cfg.saturation_range)
        hue, sat, val = _rgb_to_hsv(np.clip(planes, 0.0, 255.0) / 255.0)
        hue = np.mod(hue + hue_shift, 360.0)
        sat = np.clip(sat * sat_scale, 0.0, 1.0)
        planes = _hsv_to_rgb(hue, sat, val) * 255.0
    if cfg.gaussian_noise:
        sigma = _uniform_in(seed, _S_NOISE_SIGMA, 0, *cfg.noise_sigma_range)
        if sigma > 0.0:
            n = planes.shape[1] * planes.shape[2]
            noise = np.stack(
                [
                    rng.normals(seed, stream, 0, n).reshape(planes.shape[1:])
                    for stream in _S_NOISE_CHANNEL
                ]
            )
            planes = planes + noise * (sigma * 255.0)
    if cfg.blur:
        lo, hi = cfg.blur_radius_range
        radius = lo + math.floor(rng.unit_uniform(seed, _S_BLUR, 0) * (hi - lo + 1))
        radius = min(radius, hi)
        if radius > 0:
            planes = np.stack([_box_blur(p, radius) for p in planes])
    return planes


def augment(
    img: RgbImage,
    mask: BinaryMask,
    cfg: AugmentConfig,
    seed: int | None = None,
) -> tuple[RgbImage, BinaryMask]:
    """Apply the seeded pipeline; photometric stages touch only the image,
    geometric stages move image and mask through the same coordinate map."""
    if (img.height, img.width) != (mask.height, mask.width):
        raise ValidationError(
            f"image {img.height}x{img.width} does not match mask {mask.height}x{mask.width}"
        )
    s = cfg.seed if seed is None else int(seed)

    planes = _apply_photometric(img.planes.astype(np.float64), cfg, s)
    out_planes = _quantize(planes)

    params = draw_geometry(cfg, s, img.width, img.height)
    if params.is_identity:
        return RgbImage(out_planes), BinaryMask(mask.values)
    out_planes = np.stack([_resample_plane(p, params) for p in out_planes])
    out_mask = _resample_plane(mask.values, params)
    return RgbImage(out_planes), BinaryMask(out_mask)


def pipeline_signature(cfg: AugmentConfig, seed: int | None = None) -> str:
    """Stable 32-hex-character digest of the configuration and seed."""
    payload = {"config": cfg.to_dict(), "seed": cfg.seed if seed is None else int(seed)}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.blake2b(blob, digest_size=16).hexdigest()
