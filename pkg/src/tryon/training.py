"""Per-garment training loop: paired augmentation, alternating
discriminator/generator updates, epoch checkpoints with bit-compatible
resume, and holdout evaluation.

Randomness is derived statelessly: the shuffle permutation is a function of
(seed, epoch) and each pair's jitter is a function of (seed, epoch, frame_id),
so an interrupted run resumed from a checkpoint retraces the exact step
sequence of an uninterrupted one.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import imaging, metrics
from .dataset import DatasetManifest, DatasetRecord, load_manifest
from .errors import ConfigError, InputError, TrainingDiverged
from .imaging import (
    BILINEAR,
    NEAREST,
    AffineJitterRanges,
    RepresentationMode,
    build_representation,
    random_affine,
)
from .synthesis import (
    GarmentSynthesisNet,
    GsConfig,
    IdentityExtractor,
    LossBreakdown,
    MultiScaleDiscriminator,
    feature_matching_loss,
    gan_loss,
    load_checkpoint,
    perceptual_loss,
    probabilities,
    save_checkpoint,
    total_objective,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    lambda_fm: float = 1.0
    lambda_vgg: float = 1.0
    roi_side: int = 512
    mode: str = "hybrid"
    seed: int = 0
    base_width: int = 64
    n_downsample: int = 4
    n_blocks: int = 9
    disc_base_width: int = 64
    disc_n_layers: int = 3
    disc_n_scales: int = 2
    norm: str = "instance"
    input_skip: bool = False
    gan_variant: str = "log"
    perceptual: str = "identity"  # "identity" | "none" | "vgg"
    holdout_frac: float = 0.05
    decay_after_frac: float = 0.5  # linear lr decay over the remaining epochs
    max_steps: Optional[int] = None
    checkpoint_every: int = 1
    eval_every: int = 1
    jitter: AffineJitterRanges = field(default_factory=AffineJitterRanges)
    ema_decay: float = 0.98

    def __post_init__(self):
        if min(self.epochs, self.batch_size) <= 0 or self.learning_rate <= 0:
            raise ConfigError("epochs, batch size and learning rate must be positive")
        if self.lambda_fm < 0 or self.lambda_vgg < 0:
            raise ConfigError("loss weights must be non-negative")
        RepresentationMode(self.mode)

    def gs_config(self) -> GsConfig:
        return GsConfig(mode=self.mode, roi_side=self.roi_side, base_width=self.base_width,
                        n_downsample=self.n_downsample, n_blocks=self.n_blocks,
                        norm=self.norm, input_skip=self.input_skip,
                        disc_base_width=self.disc_base_width,
                        disc_n_layers=self.disc_n_layers, disc_n_scales=self.disc_n_scales,
                        gan_variant=self.gan_variant)


def _pair_seed(seed: int, epoch: int, frame_id: int) -> int:
    digest = hashlib.blake2s(f"{seed}:{epoch}:{frame_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def load_record_images(root: Path, record: DatasetRecord) -> dict:
    try:
        return {
            "vm": imaging.load_image(root / record.vm_path, channels=3),
            "sdp": imaging.load_image(root / record.sdp_path, channels=3),
            "dp": imaging.load_image(root / record.dp_path, channels=3),
            "garment": imaging.load_image(root / record.garment_path, channels=3),
            "mask": imaging.load_mask(root / record.mask_path),
        }
    except (OSError, InputError) as exc:
        raise InputError(f"unreadable record {record.frame_id}: {exc}") from exc


def make_training_pair(images: dict, mode: RepresentationMode | str,
                       jitter: Optional[AffineJitterRanges], seed: int
                       ) -> tuple[np.ndarray, np.ndarray]:
    """One (input representation, target) pair with identical augmentation on
    every channel: bilinear for photographic content, nearest for masks and
    part-index channels."""
    mode = RepresentationMode(mode)
    vm, sdp, dp = images["vm"], images["sdp"], images["dp"]
    garment, mask = images["garment"], images["mask"]
    if jitter is not None:
        vm = random_affine(vm, jitter, seed, BILINEAR)
        sdp = random_affine(sdp, jitter, seed, NEAREST)
        dp = random_affine(dp, jitter, seed, NEAREST)
        garment = random_affine(garment, jitter, seed, BILINEAR)
        # binary mask: resample as coverage, re-binarize (kernel-consistent
        # with the bilinear-warped garment)
        mask = (random_affine(mask, jitter, seed, BILINEAR) >= 0.5).astype(np.float32)
    rep = build_representation(mode, vm=vm, sdp=sdp, dp=dp)
    target = np.concatenate([garment, mask[None]], axis=0)
    return rep.data, target.astype(np.float32)


def holdout_split(manifest: DatasetManifest, holdout_frac: float
                  ) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Temporal split: the last fraction of frames (by frame id) is held out,
    keeping near-duplicate consecutive frames on one side only."""
    records = sorted(manifest.records, key=lambda r: r.frame_id)
    n_hold = max(1, int(round(len(records) * holdout_frac))) if holdout_frac > 0 else 0
    if n_hold >= len(records):
        raise ConfigError("holdout fraction leaves no training records")
    return records[:len(records) - n_hold], records[len(records) - n_hold:]


@dataclass
class TrainResult:
    final_checkpoint: str
    log_path: str
    steps: int
    epochs: int
    ema: dict
    evaluations: list[dict]


class GarmentTrainer:
    """Owns mutable model state; exactly one executor mutates it."""

    def __init__(self, dataset_dir, cfg: TrainConfig, out_dir):
        self.root = Path(dataset_dir)
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = load_manifest(self.root)
        if cfg.roi_side != self.manifest.roi_side:
            log.warning("config roi_side %d != dataset roi_side %d; using dataset value",
                        cfg.roi_side, self.manifest.roi_side)
            self.cfg.roi_side = self.manifest.roi_side
        self.train_records, self.holdout_records = holdout_split(self.manifest, cfg.holdout_frac)
        self._cache: dict[int, dict] = {}

        torch.manual_seed(cfg.seed)
        gs_cfg = cfg.gs_config()
        self.generator = GarmentSynthesisNet(gs_cfg)
        self.discriminator = MultiScaleDiscriminator(
            cond_channels=gs_cfg.in_channels, image_channels=4,
            base_width=cfg.disc_base_width, n_layers=cfg.disc_n_layers,
            n_scales=cfg.disc_n_scales)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=cfg.learning_rate,
                                      betas=(cfg.adam_beta1, cfg.adam_beta2))
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=cfg.learning_rate,
                                      betas=(cfg.adam_beta1, cfg.adam_beta2))
        if cfg.perceptual == "identity":
            self.extractor = IdentityExtractor()
        elif cfg.perceptual == "none":
            self.extractor = None
            if cfg.lambda_vgg > 0:
                raise ConfigError("perceptual term enabled but no extractor configured")
        elif cfg.perceptual == "vgg":
            from .synthesis import TorchvisionVggExtractor
            self.extractor = TorchvisionVggExtractor()
        else:
            raise ConfigError(f"unknown perceptual extractor '{cfg.perceptual}'")

        self.step = 0
        self.start_epoch = 0
        self.ema: dict[str, float] = {}
        self.evaluations: list[dict] = []

    # ---------------------------------------------------------------- data

    def _record_images(self, record: DatasetRecord) -> dict:
        if record.frame_id not in self._cache:
            self._cache[record.frame_id] = load_record_images(self.root, record)
        return self._cache[record.frame_id]

    def _batch(self, records: list[DatasetRecord], epoch: int
               ) -> tuple[torch.Tensor, torch.Tensor]:
        xs, ys = [], []
        for rec in records:
            try:
                images = self._record_images(rec)
            except InputError as exc:
                log.warning("skipping record: %s", exc)
                continue
            seed = _pair_seed(self.cfg.seed, epoch, rec.frame_id)
            x, y = make_training_pair(images, self.cfg.mode, self.cfg.jitter, seed)
            xs.append(x)
            ys.append(y)
        if not xs:
            raise InputError("batch had no readable records")
        return (torch.from_numpy(np.stack(xs)), torch.from_numpy(np.stack(ys)))

    # ------------------------------------------------------------- training

    def _lr_for_epoch(self, epoch: int) -> float:
        decay_start = int(self.cfg.epochs * self.cfg.decay_after_frac)
        if epoch < decay_start:
            return self.cfg.learning_rate
        span = max(self.cfg.epochs - decay_start, 1)
        frac = 1.0 - (epoch - decay_start) / span
        return self.cfg.learning_rate * max(frac, 1.0 / span * 0.5)

    def _apply_lr(self, lr: float) -> None:
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr

    def _train_step(self, x: torch.Tensor, y: torch.Tensor) -> LossBreakdown:
        cfg = self.cfg
        fake_garment, fake_mask = self.generator(x)
        fake_y = torch.cat([fake_garment, fake_mask], dim=1)

        # one batched pass scores real and detached fake for the
        # discriminator loss (instance norm keeps the halves independent);
        # a second pass on the attached fake feeds the generator terms
        b = x.shape[0]
        feats_joint = self.discriminator(torch.cat([x, x]), torch.cat([y, fake_y.detach()]))
        real_scores = [s[-1][:b] for s in feats_joint]
        fake_scores_d = [s[-1][b:] for s in feats_joint]
        feats_real = [[layer[:b] for layer in scale] for scale in feats_joint]
        feats_fake = self.discriminator(x, fake_y)
        fake_scores_g = [s[-1] for s in feats_fake]
        if cfg.gan_variant == "log":
            d_loss, _ = gan_loss(probabilities(real_scores), probabilities(fake_scores_d),
                                 variant="log")
            _, g_gan = gan_loss(probabilities(real_scores), probabilities(fake_scores_g),
                                variant="log")
        else:
            d_loss, _ = gan_loss(real_scores, fake_scores_d, variant="lsgan")
            _, g_gan = gan_loss(real_scores, fake_scores_g, variant="lsgan")
        fm = feature_matching_loss([scale[:-1] for scale in feats_real],
                                   [scale[:-1] for scale in feats_fake])
        if cfg.lambda_vgg > 0 and self.extractor is not None:
            vgg = perceptual_loss(fake_garment, fake_mask, y[:, :3], self.extractor)
        else:
            vgg = fake_garment.new_zeros(())
        g_total = total_objective(g_gan, fm, vgg, cfg.lambda_fm, cfg.lambda_vgg)

        self.opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        self.opt_g.step()
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        return LossBreakdown(gan_d=d_loss.item(), gan_g=g_gan.item(), fm=fm.item(),
                             vgg=vgg.item(), lambda_fm=cfg.lambda_fm, lambda_vgg=cfg.lambda_vgg)

    def _update_ema(self, losses: LossBreakdown) -> None:
        decay = self.cfg.ema_decay
        for key, value in losses.to_dict().items():
            if key.startswith("lambda"):
                continue
            prev = self.ema.get(key)
            self.ema[key] = value if prev is None else decay * prev + (1 - decay) * value

    def _checkpoint_path(self, epoch: int) -> Path:
        return self.out_dir / f"checkpoint_epoch_{epoch:04d}.pt"

    def _save(self, path: Path, epoch: int) -> None:
        save_checkpoint(
            path, self.cfg.gs_config(), self.generator, self.discriminator,
            optimizers={"generator": self.opt_g.state_dict(),
                        "discriminator": self.opt_d.state_dict()},
            step=self.step, epoch=epoch, dataset_hash=self.manifest.content_hash,
            extra={"ema": dict(self.ema), "torch_rng": torch.get_rng_state(),
                   "train_config": json.loads(json.dumps(asdict(self.cfg), default=list))})

    def resume(self, checkpoint_path) -> None:
        payload = load_checkpoint(checkpoint_path)
        if payload["dataset_hash"] != self.manifest.content_hash:
            log.warning("checkpoint dataset hash differs from the configured dataset")
        self.generator.load_state_dict(payload["generator"])
        if payload["discriminator"] is not None:
            self.discriminator.load_state_dict(payload["discriminator"])
        opts = payload["optimizers"]
        if "generator" in opts:
            self.opt_g.load_state_dict(opts["generator"])
        if "discriminator" in opts:
            self.opt_d.load_state_dict(opts["discriminator"])
        self.step = payload["step"]
        self.start_epoch = payload["epoch"] + 1
        self.ema = dict(payload["extra"].get("ema", {}))
        rng = payload["extra"].get("torch_rng")
        if rng is not None:
            torch.set_rng_state(rng.to(torch.uint8) if torch.is_tensor(rng) else rng)

    def train(self) -> TrainResult:
        cfg = self.cfg
        log_path = self.out_dir / "train_log.jsonl"
        log_file = open(log_path, "a")
        t_start = time.perf_counter()
        final_epoch = self.start_epoch
        try:
            for epoch in range(self.start_epoch, cfg.epochs):
                final_epoch = epoch
                lr = self._lr_for_epoch(epoch)
                self._apply_lr(lr)
                order = np.random.default_rng(_pair_seed(cfg.seed, epoch, -1)) \
                    .permutation(len(self.train_records))
                for i in range(0, len(order), cfg.batch_size):
                    batch_records = [self.train_records[j] for j in order[i:i + cfg.batch_size]]
                    x, y = self._batch(batch_records, epoch)
                    losses = self._train_step(x, y)
                    if not np.isfinite(losses.total_g) or not np.isfinite(losses.gan_d):
                        dump = self.out_dir / "diverged_state.pt"
                        self._save(dump, epoch)
                        raise TrainingDiverged(
                            f"non-finite loss at step {self.step}; state dumped to {dump}")
                    self._update_ema(losses)
                    self.step += 1
                    log_file.write(json.dumps({
                        "step": self.step, "epoch": epoch, "lr": lr,
                        **losses.to_dict(),
                        "ema": {k: round(v, 6) for k, v in self.ema.items()},
                    }) + "\n")
                    if cfg.max_steps is not None and self.step >= cfg.max_steps:
                        break
                done = (cfg.max_steps is not None and self.step >= cfg.max_steps) \
                    or epoch == cfg.epochs - 1
                if epoch % cfg.checkpoint_every == 0 or done:
                    self._save(self._checkpoint_path(epoch), epoch)
                if self.holdout_records and (epoch % cfg.eval_every == 0 or done):
                    summary = self.evaluate(self.holdout_records)
                    summary.update({"epoch": epoch, "step": self.step})
                    self.evaluations.append(summary)
                    log_file.write(json.dumps({"eval": summary}) + "\n")
                if done:
                    break
        finally:
            log_file.close()
        final_path = self.out_dir / "checkpoint_final.pt"
        self._save(final_path, final_epoch)
        log.info("training done: %d steps in %.1fs", self.step, time.perf_counter() - t_start)
        return TrainResult(final_checkpoint=str(final_path), log_path=str(log_path),
                           steps=self.step, epochs=final_epoch + 1, ema=dict(self.ema),
                           evaluations=list(self.evaluations))

    # ------------------------------------------------------------ evaluation

    def evaluate(self, records: Optional[list[DatasetRecord]] = None) -> dict:
        """Masked L1 and SSIM of the current generator over holdout records
        (no augmentation, evaluation mode)."""
        records = records if records is not None else self.holdout_records
        if not records:
            raise ConfigError("evaluation needs a non-empty holdout")
        return evaluate_generator(self.generator, self.root, records, self.cfg.mode)


def evaluate_generator(generator: GarmentSynthesisNet, root, records: list[DatasetRecord],
                       mode: RepresentationMode | str) -> dict:
    mode = RepresentationMode(mode)
    root = Path(root)
    generator.eval()
    l1_values, ssim_values = [], []
    with torch.no_grad():
        for rec in records:
            images = load_record_images(root, rec)
            x, _ = make_training_pair(images, mode, None, 0)
            garment, mask = generator(torch.from_numpy(x[None]))
            # score the mask-gated prediction: that is what gets composited
            pred = (garment[0] * mask[0]).numpy()
            l1_values.append(metrics.masked_l1(pred, images["garment"], images["mask"]))
            ssim_values.append(metrics.ssim(pred, images["garment"]))
    generator.train()
    return {"masked_l1": float(np.mean(l1_values)), "ssim": float(np.mean(ssim_values)),
            "count": len(records)}


def train(dataset_dir, cfg: TrainConfig, out_dir) -> TrainResult:
    """Train a per-garment model from a persisted dataset."""
    return GarmentTrainer(dataset_dir, cfg, out_dir).train()
