"""Synthetic capture footage: simple block figures whose proportions match
the perception stubs' body chart, for tests, demos and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import perception
from .imaging import Image


@dataclass(frozen=True)
class SyntheticPerson:
    """Block figure placed by bounding box; colors per region."""

    center_x: float = 0.5   # fractions of the frame
    bottom_y: float = 0.95
    height: float = 0.8     # fraction of frame height
    shirt_color: tuple[float, float, float] = (0.75, 0.2, 0.2)
    skin_color: tuple[float, float, float] = (0.85, 0.7, 0.55)
    pants_color: tuple[float, float, float] = (0.2, 0.25, 0.6)
    arm_spread: float = 0.26  # arm reach beyond torso, fraction of height


def _paint(img: np.ndarray, r0: int, r1: int, c0: int, c1: int, color) -> None:
    h, w = img.shape[1:]
    r0, r1 = max(r0, 0), min(r1, h)
    c0, c1 = max(c0, 0), min(c1, w)
    if r0 < r1 and c0 < c1:
        img[:, r0:r1, c0:c1] = np.asarray(color, dtype=np.float32)[:, None, None]


def draw_person(height_px: int, width_px: int, person: SyntheticPerson) -> Image:
    """Rasterize the block figure on a black background.

    The torso is an exact rectangle spanning the stub parser's garment band,
    so the stub's mask equals that rectangle.
    """
    img = np.zeros((3, height_px, width_px), dtype=np.float32)
    ph = person.height * height_px
    bottom = person.bottom_y * height_px
    top = bottom - ph
    cx = person.center_x * width_px
    half_torso = perception.TORSO_HALF_WIDTH * ph

    def rows(frac0, frac1):
        return int(round(top + frac0 * ph)), int(round(top + frac1 * ph))

    # head
    r0, r1 = rows(*perception.HEAD_ROWS)
    _paint(img, r0, r1, int(round(cx - 0.06 * ph)), int(round(cx + 0.06 * ph)), person.skin_color)
    # torso: exactly the garment band and half-width of the stub chart
    r0, r1 = rows(*perception.TORSO_ROWS)
    c0 = int(np.ceil(cx - half_torso - 0.5))
    c1 = int(np.floor(cx + half_torso - 0.5)) + 1
    _paint(img, r0, r1, c0, c1, person.shirt_color)
    # arms: horizontal bars leaving the torso within the upper-arm band
    r0, r1 = rows(perception.UPPER_ARM_ROWS[0], perception.UPPER_ARM_ROWS[1])
    reach = int(round(person.arm_spread * ph))
    _paint(img, r0, r1, c0 - reach, c0, person.shirt_color)
    _paint(img, r0, r1, c1, c1 + reach, person.shirt_color)
    # legs and feet
    r0, r1 = rows(perception.LEG_ROWS[0], 1.0)
    leg_w = int(round(0.07 * ph))
    gap = int(round(0.02 * ph))
    _paint(img, r0, r1, int(round(cx - gap - leg_w)), int(round(cx - gap)), person.pants_color)
    _paint(img, r0, r1, int(round(cx + gap)), int(round(cx + gap + leg_w)), person.pants_color)
    return img


def moving_person(frame_index: int, n_frames: int, seed: int = 0) -> SyntheticPerson:
    """Deterministic capture-like motion: slow horizontal sway plus a small
    scale oscillation."""
    rng = np.random.default_rng(seed)
    base_x = rng.uniform(0.45, 0.55)
    base_h = rng.uniform(0.72, 0.8)
    phase = 2.0 * np.pi * frame_index / max(n_frames, 1)
    return SyntheticPerson(
        center_x=base_x + 0.18 * np.sin(phase),
        height=base_h + 0.05 * np.sin(2.0 * phase + 1.0),
    )


def synthetic_frame(frame_index: int, n_frames: int, height_px: int, width_px: int,
                    seed: int = 0) -> Image:
    return draw_person(height_px, width_px, moving_person(frame_index, n_frames, seed))


def two_person_frame(height_px: int, width_px: int) -> Image:
    """A large and a small figure in one frame, for largest-person selection."""
    big = SyntheticPerson(center_x=0.32, height=0.8)
    small = replace(big, center_x=0.75, height=0.4, bottom_y=0.7)
    img = draw_person(height_px, width_px, big)
    img2 = draw_person(height_px, width_px, small)
    return np.maximum(img, img2)
