"""Closed-loop toy experiment: a synthetic per-garment dataset whose target
garment is a fixed channel recoloring of the measurement render, masked to
its silhouette.

The mapping from network input to target is deterministic and exactly
representable, so training quality is measurable without real capture:
holdout masked-L1 and SSIM quantify how well the pipeline learned the
data-generating function.
"""

from __future__ import annotations

import numpy as np

from .dataset import DatasetBuildConfig, DatasetManifest, build_dataset
from .imaging import AffineJitterRanges
from .measurement import GridTexture
from .perception import (
    DerivedGarmentParseBackend,
    PerceptionSet,
    StubDensePoseBackend,
    StubPoseBackend,
)
from .training import TrainConfig
from .video import SyntheticVideoSource

# moderate-contrast colored grid: the channel rotation is visible and missed
# thin lines cost little absolute error
TOY_TEXTURE = GridTexture(cell_size=96, line_width=14,
                          line_color=(0.5, 0.35, 0.25), fill_color=(0.8, 0.65, 0.45))
TOY_RECOLOR = np.array([[0.0, 1.0, 0.0],
                        [0.0, 0.0, 1.0],
                        [1.0, 0.0, 0.0]])
TOY_ROI_SIDE = 64


def toy_backends(pose_seed: int = 7) -> PerceptionSet:
    pose = StubPoseBackend(seed=pose_seed)
    return PerceptionSet(
        pose=pose,
        densepose=StubDensePoseBackend(),
        parse=DerivedGarmentParseBackend(pose, texture=TOY_TEXTURE, color_matrix=TOY_RECOLOR),
    )


def build_toy_dataset(out_dir, n_frames: int = 60, height: int = 192, width: int = 256,
                      video_seed: int = 1, pose_seed: int = 7) -> DatasetManifest:
    source = SyntheticVideoSource(n_frames, height, width, seed=video_seed)
    cfg = DatasetBuildConfig(
        garment_id="toy", out_dir=str(out_dir), roi_side=TOY_ROI_SIDE,
        working_short_side=height, texture=TOY_TEXTURE)
    return build_dataset(source, toy_backends(pose_seed), cfg)


def toy_train_config(seed: int, max_steps: int = 2000, batch_size: int = 4,
                     n_train_records: int = 57, mode: str = "hybrid") -> TrainConfig:
    """Tiny-network schedule sized so the linear lr decay completes within
    the step budget."""
    steps_per_epoch = max(1, int(np.ceil(n_train_records / batch_size)))
    epochs = max(1, int(np.ceil(max_steps / steps_per_epoch)))
    return TrainConfig(
        epochs=epochs, batch_size=batch_size, learning_rate=1e-3,
        lambda_fm=1.0, lambda_vgg=12.0, roi_side=TOY_ROI_SIDE, mode=mode, seed=seed,
        base_width=12, n_downsample=1, n_blocks=2, input_skip=True, norm="instance",
        disc_base_width=12, disc_n_layers=2, disc_n_scales=2,
        gan_variant="log", perceptual="identity", holdout_frac=0.05,
        decay_after_frac=0.3, max_steps=max_steps, checkpoint_every=50, eval_every=25,
        jitter=AffineJitterRanges(max_translate=0.05, max_rotate_deg=3.0, max_scale=0.05),
    )
