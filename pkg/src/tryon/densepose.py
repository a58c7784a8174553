"""Dense body-surface map preparation: raster encoding, simplification, and
upper-body localisation.

The 24-part DensePose convention is the interface contract. Simplification
paints the configured part set (torso + lower body by default) solid white,
which removes the unstable torso/lower-body boundary and stabilises the
representation over time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .imaging import Image, RoiTransform

NUM_PARTS = 24

# 24-part convention: 1,2 torso; 3,4 hands; 5,6 feet; 7-14 legs;
# 15-22 arms; 23,24 head.
TORSO_PARTS = (1, 2)
HAND_PARTS = (3, 4)
LOWER_BODY_PARTS = (5, 6, 7, 8, 9, 10, 11, 12, 13, 14)
ARM_PARTS = (15, 16, 17, 18, 19, 20, 21, 22)
HEAD_PARTS = (23, 24)

# painted white: torso plus all lower-body parts
DEFAULT_SIMPLIFICATION_SET = tuple(sorted(TORSO_PARTS + LOWER_BODY_PARTS))
# localisation for the square crop: torso, arms and head (hands excluded)
UPPER_BODY_PARTS = tuple(sorted(TORSO_PARTS + ARM_PARTS + HEAD_PARTS))


@dataclass
class DensePoseMap:
    """Per-pixel body-part index plus surface UV coordinates.

    part_index is 0 on background; u and v are zero wherever part_index is 0.
    """

    part_index: np.ndarray  # (H, W) int
    u: np.ndarray  # (H, W) float32 in [0, 1]
    v: np.ndarray  # (H, W) float32 in [0, 1]

    def __post_init__(self):
        if self.part_index.shape != self.u.shape or self.u.shape != self.v.shape:
            raise InputError("densepose planes must share dimensions")
        bg = self.part_index == 0
        if np.any(self.u[bg] != 0) or np.any(self.v[bg] != 0):
            raise InputError("u and v must be zero on background pixels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.part_index.shape


def encode_iuv(dp: DensePoseMap) -> Image:
    """Encode a densepose map as a 3-channel image: (part/24, u, v)."""
    parts = dp.part_index
    if parts.min() < 0 or parts.max() > NUM_PARTS:
        raise InputError(f"part indices must lie in [0, {NUM_PARTS}]")
    chan0 = parts.astype(np.float32) / NUM_PARTS
    return np.stack([chan0, dp.u.astype(np.float32), dp.v.astype(np.float32)], axis=0)


def decode_iuv(img: Image) -> DensePoseMap:
    """Inverse of :func:`encode_iuv`; exact for all part indices even after
    8-bit quantization."""
    if img.shape[0] != 3:
        raise InputError("encoded densepose images have 3 channels")
    parts = np.round(img[0].astype(np.float64) * NUM_PARTS).astype(np.int16)
    bg = parts == 0
    u = img[1].astype(np.float32).copy()
    v = img[2].astype(np.float32).copy()
    u[bg] = 0.0
    v[bg] = 0.0
    return DensePoseMap(parts, u, v)


def part_plane(dp_img: Image) -> np.ndarray:
    """Integer part plane of an encoded densepose image."""
    return np.round(dp_img[0].astype(np.float64) * NUM_PARTS).astype(np.int16)


def simplify(dp_img: Image, simplification_set: Sequence[int] = DEFAULT_SIMPLIFICATION_SET) -> Image:
    """Paint every pixel whose part index belongs to the set solid white;
    leave all other pixels unchanged. Idempotent."""
    if dp_img.shape[0] != 3:
        raise InputError("simplify expects an encoded 3-channel densepose image")
    parts = part_plane(dp_img)
    member = np.isin(parts, np.asarray(list(simplification_set), dtype=np.int16))
    out = dp_img.astype(np.float32, copy=True)
    out[:, member] = 1.0
    return out


BBox = tuple[int, int, int, int]  # (top, left, bottom, right), inclusive


def upper_body_bbox(dp: DensePoseMap) -> Optional[BBox]:
    """Tight bounding box over upper-body pixels (torso, arms, head);
    None when no such pixels exist."""
    member = np.isin(dp.part_index, np.asarray(UPPER_BODY_PARTS, dtype=dp.part_index.dtype))
    if not member.any():
        return None
    rows = np.where(member.any(axis=1))[0]
    cols = np.where(member.any(axis=0))[0]
    return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])


def upper_body_roi(dp: DensePoseMap, target_side: int, pad: float = 0.15) -> Optional[RoiTransform]:
    """Square crop transform over the upper-body box with relative padding.

    This one policy is shared by dataset building and inference so training
    and try-on see identically framed inputs.
    """
    box = upper_body_bbox(dp)
    if box is None:
        return None
    top, left, bottom, right = box
    h = bottom - top + 1
    w = right - left + 1
    side = max(h, w) * (1.0 + pad)
    cy = (top + bottom + 1) / 2.0
    cx = (left + right + 1) / 2.0
    return RoiTransform(center_x=cx, center_y=cy, source_side=side, target_side=target_side)
