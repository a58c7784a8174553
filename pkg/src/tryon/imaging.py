"""Core raster types and transforms.

Images are numpy float32 arrays of shape (C, H, W) with values in [0, 1]
(C in {1, 3, 4, 6}; 3-channel images are RGB). Soft masks are (H, W) arrays
in [0, 1]. All operations are pure functions on immutable inputs.

Resampling kernels: bilinear for photographic content, nearest-neighbor for
masks and body-part index channels (part indices must not blend). Out-of-bounds
samples are zero, matching the black-background convention of the intermediate
representations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image as PilImage

from .errors import InputError

Image = np.ndarray  # float32 (C, H, W) in [0, 1]
SoftMask = np.ndarray  # float32 (H, W) in [0, 1]

BILINEAR = "bilinear"
NEAREST = "nearest"


def ensure_image(img: np.ndarray, channels: Optional[int] = None, name: str = "image") -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise InputError(f"{name} must be a (C, H, W) array")
    if channels is not None and img.shape[0] != channels:
        raise InputError(f"{name} must have {channels} channels, got {img.shape[0]}")
    return img


def ensure_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    if not isinstance(mask, np.ndarray) or mask.ndim != 2:
        raise InputError(f"{name} must be a (H, W) array")
    return mask


def concat_channels(a: Image, b: Image) -> Image:
    """Channel-wise concatenation; a's channels precede b's."""
    ensure_image(a, name="a")
    ensure_image(b, name="b")
    if a.shape[1:] != b.shape[1:]:
        raise InputError(f"channel concat needs matching spatial dims, got {a.shape[1:]} vs {b.shape[1:]}")
    return np.concatenate([a, b], axis=0)


@dataclass(frozen=True)
class RoiTransform:
    """Square crop of side ``source_side`` centered at (center_x, center_y),
    resampled to ``target_side`` x ``target_side``.

    When source_side == target_side the crop snaps to the integer pixel grid
    and is a pure copy, so extract followed by inverse is bit-exact on the
    crop interior. ``affine_jitter``, when present, is a 2x3 matrix mapping
    output pixel coordinates to pre-jitter output coordinates (inverse-warp
    convention); jittered transforms are not invertible by contract.
    """

    center_x: float
    center_y: float
    source_side: float
    target_side: int
    affine_jitter: Optional[np.ndarray] = None

    def validate(self) -> None:
        if self.target_side <= 0 or self.source_side <= 0:
            raise InputError("roi sides must be positive")

    @property
    def origin(self) -> tuple[float, float]:
        return (self.center_x - self.source_side / 2.0, self.center_y - self.source_side / 2.0)

    def to_dict(self) -> dict:
        return {
            "center_x": float(self.center_x),
            "center_y": float(self.center_y),
            "source_side": float(self.source_side),
            "target_side": int(self.target_side),
        }

    @staticmethod
    def from_dict(d: dict) -> "RoiTransform":
        return RoiTransform(d["center_x"], d["center_y"], d["source_side"], d["target_side"])


def _sample_affine(img: np.ndarray, matrix: np.ndarray, out_h: int, out_w: int, interp: str) -> np.ndarray:
    """Warp by a 2x3 matrix mapping output pixel coords to source pixel coords.

    Pixel (i, j) has center (x, y) = (j + 0.5, i + 0.5). Samples outside the
    source are zero.
    """
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    c, h, w = img.shape
    xs = np.arange(out_w, dtype=np.float64) + 0.5
    ys = np.arange(out_h, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    sx = matrix[0, 0] * gx + matrix[0, 1] * gy + matrix[0, 2]
    sy = matrix[1, 0] * gx + matrix[1, 1] * gy + matrix[1, 2]

    if interp == NEAREST:
        xi = np.floor(sx).astype(np.int64)
        yi = np.floor(sy).astype(np.int64)
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xi = np.clip(xi, 0, w - 1)
        yi = np.clip(yi, 0, h - 1)
        out = img[:, yi, xi]
        out *= valid[None]
    elif interp == BILINEAR:
        u = sx - 0.5
        v = sy - 0.5
        x0 = np.floor(u).astype(np.int64)
        y0 = np.floor(v).astype(np.int64)
        fx = (u - x0).astype(np.float32)
        fy = (v - y0).astype(np.float32)
        out = np.zeros((c, out_h, out_w), dtype=np.float32)
        for dy in (0, 1):
            for dx in (0, 1):
                xi = x0 + dx
                yi = y0 + dy
                wgt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
                valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
                xi_c = np.clip(xi, 0, w - 1)
                yi_c = np.clip(yi, 0, h - 1)
                out += img[:, yi_c, xi_c] * (wgt * valid).astype(np.float32)[None]
    else:
        raise InputError(f"unknown interpolation '{interp}'")

    out = out.astype(np.float32)
    return out[0] if squeeze else out


def _paste_copy(img: np.ndarray, x0: int, y0: int, out_h: int, out_w: int) -> np.ndarray:
    """Copy img so that its (0,0) lands at output (y0, x0) inverse-less; used
    by the integer fast paths in both crop directions."""
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    c, h, w = img.shape
    out = np.zeros((c, out_h, out_w), dtype=np.float32)
    src_y0, src_x0 = max(0, -y0), max(0, -x0)
    dst_y0, dst_x0 = max(0, y0), max(0, x0)
    cpy_h = min(h - src_y0, out_h - dst_y0)
    cpy_w = min(w - src_x0, out_w - dst_x0)
    if cpy_h > 0 and cpy_w > 0:
        out[:, dst_y0:dst_y0 + cpy_h, dst_x0:dst_x0 + cpy_w] = \
            img[:, src_y0:src_y0 + cpy_h, src_x0:src_x0 + cpy_w]
    return out[0] if squeeze else out


def roi_extract(img: np.ndarray, roi: RoiTransform, interp: str = BILINEAR) -> np.ndarray:
    """Crop the ROI square and resample it to target_side x target_side.

    Regions outside the source bounds are zero. Accepts (C, H, W) images or
    (H, W) masks.
    """
    roi.validate()
    if img.size == 0:
        raise InputError("empty input image")
    t = roi.target_side
    if roi.affine_jitter is None and float(roi.source_side) == float(t):
        ox, oy = roi.origin
        return _paste_copy(img, -int(round(ox)), -int(round(oy)), t, t)
    scale = roi.source_side / t
    ox, oy = roi.origin
    matrix = np.array([[scale, 0.0, ox], [0.0, scale, oy]], dtype=np.float64)
    if roi.affine_jitter is not None:
        j = np.vstack([roi.affine_jitter, [0.0, 0.0, 1.0]])
        m = np.vstack([matrix, [0.0, 0.0, 1.0]])
        matrix = (m @ j)[:2]
    return _sample_affine(img, matrix, t, t, interp)


def roi_inverse(img: np.ndarray, roi: RoiTransform, canvas_h: int, canvas_w: int,
                interp: str = BILINEAR) -> np.ndarray:
    """Place a target_side x target_side image back onto a canvas, undoing
    :func:`roi_extract`. Pixels outside the ROI square are exactly zero."""
    roi.validate()
    if roi.affine_jitter is not None:
        raise InputError("jittered roi transforms are not invertible")
    t = roi.target_side
    ox, oy = roi.origin
    if float(roi.source_side) == float(t):
        return _paste_copy(img, int(round(ox)), int(round(oy)), canvas_h, canvas_w)
    # sample only the square's pixel bounding box, then paste
    x_lo = max(int(np.floor(ox)), 0)
    y_lo = max(int(np.floor(oy)), 0)
    x_hi = min(int(np.ceil(ox + roi.source_side)), canvas_w)
    y_hi = min(int(np.ceil(oy + roi.source_side)), canvas_h)
    squeeze = img.ndim == 2
    shape = (canvas_h, canvas_w) if squeeze else (img.shape[0], canvas_h, canvas_w)
    out = np.zeros(shape, dtype=np.float32)
    if x_hi <= x_lo or y_hi <= y_lo:
        return out
    scale = t / roi.source_side
    # patch pixel (0,0) sits at canvas (y_lo, x_lo)
    matrix = np.array([[scale, 0.0, (x_lo - ox) * scale],
                       [0.0, scale, (y_lo - oy) * scale]], dtype=np.float64)
    patch = _sample_affine(img, matrix, y_hi - y_lo, x_hi - x_lo, interp)
    # confine support strictly to the roi square (bilinear edge bleed otherwise
    # extends half a pixel past it)
    xs = np.arange(x_lo, x_hi) + 0.5
    ys = np.arange(y_lo, y_hi) + 0.5
    inside = ((xs >= ox) & (xs < ox + roi.source_side))[None, :] & \
             ((ys >= oy) & (ys < oy + roi.source_side))[:, None]
    patch = patch * inside if squeeze else patch * inside[None]
    if squeeze:
        out[y_lo:y_hi, x_lo:x_hi] = patch
    else:
        out[:, y_lo:y_hi, x_lo:x_hi] = patch
    return out


@dataclass(frozen=True)
class AffineJitterRanges:
    """Symmetric ranges for training-time affine augmentation."""

    max_translate: float = 0.05  # fraction of the image side
    max_rotate_deg: float = 3.0
    max_scale: float = 0.05  # scale drawn from [1 - s, 1 + s]


def sample_affine_params(ranges: AffineJitterRanges, seed: int) -> tuple[float, float, float, float]:
    """Draw (tx_px_fraction, ty_px_fraction, rotation_deg, scale) for a seed.

    Pure function of (ranges, seed); the same seed gives the same transform
    for every image of a training pair.
    """
    rng = np.random.default_rng(seed)
    tx = rng.uniform(-ranges.max_translate, ranges.max_translate)
    ty = rng.uniform(-ranges.max_translate, ranges.max_translate)
    rot = rng.uniform(-ranges.max_rotate_deg, ranges.max_rotate_deg)
    scale = rng.uniform(1.0 - ranges.max_scale, 1.0 + ranges.max_scale)
    return tx, ty, rot, scale


def _jitter_matrix(h: int, w: int, tx: float, ty: float, rot_deg: float, scale: float) -> np.ndarray:
    """Output->source matrix for translate/rotate/scale about the image center."""
    cx, cy = w / 2.0, h / 2.0
    theta = np.deg2rad(rot_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    # forward: p_out = C + t + s * R(theta) (p_src - C); invert for sampling
    inv_s = 1.0 / scale
    m00 = inv_s * cos_t
    m01 = inv_s * sin_t
    m10 = -inv_s * sin_t
    m11 = inv_s * cos_t
    ox = tx * w
    oy = ty * h
    # src = C + R(-theta)/s * (p_out - C - t)
    bx = cx - m00 * (cx + ox) - m01 * (cy + oy)
    by = cy - m10 * (cx + ox) - m11 * (cy + oy)
    return np.array([[m00, m01, bx], [m10, m11, by]], dtype=np.float64)


def random_affine(img: np.ndarray, ranges: AffineJitterRanges, seed: int,
                  interp: str = BILINEAR) -> np.ndarray:
    """Apply a seeded random affine jitter (deterministic given seed)."""
    tx, ty, rot, scale = sample_affine_params(ranges, seed)
    if tx == 0.0 and ty == 0.0 and rot == 0.0 and scale == 1.0:
        return img.astype(np.float32, copy=True)
    h, w = img.shape[-2:]
    matrix = _jitter_matrix(h, w, tx, ty, rot, scale)
    return _sample_affine(img, matrix, h, w, interp)


def resize(img: np.ndarray, out_h: int, out_w: int, interp: str = BILINEAR) -> np.ndarray:
    """Resample a full image to a new size (zero-padding convention unused:
    the map is onto)."""
    h, w = img.shape[-2:]
    matrix = np.array([[w / out_w, 0.0, 0.0], [0.0, h / out_h, 0.0]], dtype=np.float64)
    return _sample_affine(img, matrix, out_h, out_w, interp)


def composite(base: Image, garment: Image, mask: SoftMask) -> Image:
    """Alpha-blend the garment onto the base frame: base*(1-m) + garment*m."""
    ensure_image(base, channels=3, name="base")
    ensure_image(garment, channels=3, name="garment")
    ensure_mask(mask)
    if base.shape[1:] != garment.shape[1:] or base.shape[1:] != mask.shape:
        raise InputError("composite inputs must share height and width")
    m = mask[None].astype(np.float32)
    return (base * (1.0 - m) + garment * m).astype(np.float32)


class RepresentationMode(str, enum.Enum):
    """Which intermediate person representation feeds the synthesis network."""

    HYBRID = "hybrid"  # measurement garment + simplified densepose (6ch)
    VM = "vm"          # measurement garment only (3ch)
    VMDP = "vmdp"      # measurement garment + raw densepose (6ch)
    SDP = "sdp"        # simplified densepose only (3ch)

    @property
    def channels(self) -> int:
        return 6 if self in (RepresentationMode.HYBRID, RepresentationMode.VMDP) else 3


@dataclass(frozen=True)
class HybridRepresentation:
    """Network input: channel stack selected by mode."""

    mode: RepresentationMode
    data: Image

    def __post_init__(self):
        ensure_image(self.data, channels=self.mode.channels, name=f"{self.mode.value} representation")


def build_representation(mode: RepresentationMode | str,
                         vm: Optional[Image] = None,
                         sdp: Optional[Image] = None,
                         dp: Optional[Image] = None) -> HybridRepresentation:
    """Assemble the representation for a mode from its constituent channels."""
    mode = RepresentationMode(mode)
    if mode is RepresentationMode.HYBRID:
        if vm is None or sdp is None:
            raise InputError("hybrid mode needs vm and sdp images")
        data = concat_channels(vm, sdp)
    elif mode is RepresentationMode.VM:
        if vm is None:
            raise InputError("vm mode needs the vm image")
        data = vm
    elif mode is RepresentationMode.VMDP:
        if vm is None or dp is None:
            raise InputError("vmdp mode needs vm and unsimplified densepose images")
        data = concat_channels(vm, dp)
    else:
        if sdp is None:
            raise InputError("sdp mode needs the sdp image")
        data = sdp
    return HybridRepresentation(mode, data.astype(np.float32))


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return (arr.astype(np.float32) / 255.0).astype(np.float32)


def save_image(path, img: Image) -> None:
    """Persist as lossless 8-bit PNG. 1/3/4-channel images only; 6-channel
    tensors persist as two separate PNGs (vm + sdp)."""
    ensure_image(img)
    c = img.shape[0]
    if c == 1:
        pil = PilImage.fromarray(to_uint8(img[0]), mode="L")
    elif c == 3:
        pil = PilImage.fromarray(np.moveaxis(to_uint8(img), 0, 2), mode="RGB")
    elif c == 4:
        pil = PilImage.fromarray(np.moveaxis(to_uint8(img), 0, 2), mode="RGBA")
    else:
        raise InputError(f"cannot store a {c}-channel image in one PNG")
    pil.save(path, format="PNG")


def load_image(path, channels: Optional[int] = None) -> Image:
    arr = np.asarray(PilImage.open(path))
    if arr.ndim == 2:
        img = from_uint8(arr)[None]
    else:
        img = from_uint8(np.moveaxis(arr, 2, 0))
    if channels is not None and img.shape[0] != channels:
        raise InputError(f"{path}: expected {channels} channels, got {img.shape[0]}")
    return img


def save_mask(path, mask: SoftMask) -> None:
    ensure_mask(mask)
    PilImage.fromarray(to_uint8(mask), mode="L").save(path, format="PNG")


def load_mask(path) -> SoftMask:
    arr = np.asarray(PilImage.open(path).convert("L"))
    return from_uint8(arr)
