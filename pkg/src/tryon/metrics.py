"""Image and video quality metrics: SSIM, masked L1, and a pluggable
Frechet-style video distribution metric.

SSIM uses the canonical parameters (11x11 Gaussian window, sigma 1.5,
C1 = 0.01^2, C2 = 0.03^2 on the [0, 1] range) and averages the per-window map
over valid window positions. Feature backbones for perceptual and video
metrics are injected, never bundled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np
from scipy import linalg, signal

from .errors import ConfigError, InputError
from .imaging import Image, SoftMask

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2D Gaussian window."""
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _to_luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img.astype(np.float64)
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0].astype(np.float64)
    if img.ndim == 3 and img.shape[0] == 3:
        return np.tensordot(_LUMA_WEIGHTS, img.astype(np.float64), axes=1)
    raise InputError(f"ssim expects (H,W), (1,H,W) or (3,H,W) input, got {img.shape}")


def ssim(a: Image, b: Image, window_size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Structural similarity between two images in [0, 1] range.

    3-channel inputs are converted to luma. Returns the mean of the SSIM map
    over all fully-valid window positions.
    """
    xa = _to_luma(a)
    xb = _to_luma(b)
    if xa.shape != xb.shape:
        raise InputError(f"ssim needs equal dimensions, got {xa.shape} vs {xb.shape}")
    if min(xa.shape) < window_size:
        raise InputError(f"ssim needs images of at least {window_size} px per side")
    win = gaussian_window(window_size, sigma)

    def filt(x):
        return signal.correlate2d(x, win, mode="valid")

    mu1 = filt(xa)
    mu2 = filt(xb)
    mu1_sq = mu1 * mu1
    mu2_sq = mu2 * mu2
    mu12 = mu1 * mu2
    sigma1_sq = filt(xa * xa) - mu1_sq
    sigma2_sq = filt(xb * xb) - mu2_sq
    sigma12 = filt(xa * xb) - mu12

    num = (2.0 * mu12 + SSIM_C1) * (2.0 * sigma12 + SSIM_C2)
    den = (mu1_sq + mu2_sq + SSIM_C1) * (sigma1_sq + sigma2_sq + SSIM_C2)
    return float(np.mean(num / den))


def masked_l1(pred: Image, target: Image, mask: SoftMask) -> float:
    """Mean absolute difference weighted by the mask, normalized by mask sum.

    Returns 0 when the mask sums to zero.
    """
    if pred.shape != target.shape:
        raise InputError(f"masked_l1 needs equal shapes, got {pred.shape} vs {target.shape}")
    if pred.shape[-2:] != mask.shape:
        raise InputError("mask dims must match image dims")
    w = mask.astype(np.float64)
    denom = w.sum() * (pred.shape[0] if pred.ndim == 3 else 1)
    if denom <= 0.0:
        return 0.0
    diff = np.abs(pred.astype(np.float64) - target.astype(np.float64))
    if pred.ndim == 3:
        w = w[None]
    return float((diff * w).sum() / denom)


def frechet_distance(mu1: np.ndarray, sigma1: np.ndarray,
                     mu2: np.ndarray, sigma2: np.ndarray) -> float:
    """Frechet distance between two Gaussians given their moments:
    ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))."""
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    sigma1 = np.atleast_2d(np.asarray(sigma1, dtype=np.float64))
    sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=np.float64))
    diff = mu1 - mu2
    covmean = linalg.sqrtm(sigma1 @ sigma2)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    d = float(diff @ diff + np.trace(sigma1 + sigma2 - 2.0 * covmean))
    return max(d, 0.0)


class VideoFeatureBackend(Protocol):
    """Injected feature backbone reducing a clip to Gaussian moments."""

    name: str

    def moments(self, frames: Sequence[Image]) -> tuple[np.ndarray, np.ndarray]:
        """Return (mean, covariance) of per-frame features."""
        ...


def video_metric(frames_a: Sequence[Image], frames_b: Sequence[Image],
                 backend: Optional[VideoFeatureBackend]) -> float:
    """Frechet distance between clip feature distributions; the backbone is
    supplied by the caller (none is bundled)."""
    if backend is None:
        raise ConfigError("video_metric requires an injected feature backend")
    mu1, sigma1 = backend.moments(frames_a)
    mu2, sigma2 = backend.moments(frames_b)
    return frechet_distance(mu1, sigma1, mu2, sigma2)


@dataclass
class MetricReport:
    """Per-frame metric values plus recomputable aggregates."""

    name: str
    per_frame: list[float]
    params: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_frame)) if self.per_frame else float("nan")

    @property
    def stddev(self) -> float:
        return float(np.std(self.per_frame)) if self.per_frame else float("nan")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "per_frame": [float(v) for v in self.per_frame],
            "mean": self.mean,
            "stddev": self.stddev,
        }


def evaluate_sequences(pred_frames: Iterable[Image], gt_frames: Iterable[Image],
                       metric_names: Sequence[str] = ("ssim", "l1")) -> list[MetricReport]:
    """Frame-paired metrics between two sequences of equal length."""
    reports = {name: MetricReport(name, []) for name in metric_names}
    n = 0
    for pred, gt in zip(pred_frames, gt_frames):
        if pred.shape != gt.shape:
            raise InputError("pred/gt frame dimensions differ")
        if "ssim" in reports:
            reports["ssim"].per_frame.append(ssim(pred, gt))
        if "l1" in reports:
            full = np.ones(pred.shape[-2:], dtype=np.float32)
            reports["l1"].per_frame.append(masked_l1(pred, gt, full))
        n += 1
    if n == 0:
        raise InputError("no frames to evaluate")
    return list(reports.values())
