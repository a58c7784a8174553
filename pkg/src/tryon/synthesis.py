"""Garment synthesis network, multi-scale patch discriminator, and the
training losses (adversarial, feature matching, perceptual).

The generator is a coarse-to-fine translation network (downsampling stem,
residual bottleneck, transposed-conv head) emitting four channels: an RGB
garment image and a soft mask, both bounded to [0, 1]. The discriminator
scores (condition, image) pairs at two scales and exposes its intermediate
features for the feature-matching loss.

Tensors at this module's boundary are [0, 1]; renormalization to [-1, 1]
happens inside the generator.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, InputError
from .imaging import HybridRepresentation, Image, RepresentationMode, SoftMask

GAN_EPS = 1e-7

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class GsConfig:
    """Architecture and objective configuration, stamped into checkpoints."""

    mode: str = "hybrid"
    roi_side: int = 512
    base_width: int = 64
    n_downsample: int = 4
    n_blocks: int = 9
    norm: str = "instance"  # "instance" or "none" (tiny nets fit exact levels)
    input_skip: bool = False  # 1x1 input->output projection added to the head
    disc_base_width: int = 64
    disc_n_layers: int = 3
    disc_n_scales: int = 2
    gan_variant: str = "log"  # "log" (probability form) or "lsgan"

    @property
    def in_channels(self) -> int:
        return RepresentationMode(self.mode).channels

    @staticmethod
    def tiny(mode: str = "hybrid", roi_side: int = 64) -> "GsConfig":
        return GsConfig(mode=mode, roi_side=roi_side, base_width=16, n_downsample=2,
                        n_blocks=2, disc_base_width=16, disc_n_layers=2, disc_n_scales=2)


def _norm_layer(kind: str, width: int) -> nn.Module:
    if kind == "instance":
        return nn.InstanceNorm2d(width)
    if kind == "none":
        return nn.Identity()
    raise ConfigError(f"unknown norm '{kind}'")


@dataclass
class GsOutput:
    """Synthesized garment image and soft mask, equal spatial dims."""

    garment: Image  # (3, H, W)
    mask: SoftMask  # (H, W)


class _ResidualBlock(nn.Module):
    def __init__(self, width: int, norm: str = "instance"):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1), nn.Conv2d(width, width, 3),
            _norm_layer(norm, width), nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1), nn.Conv2d(width, width, 3),
            _norm_layer(norm, width),
        )

    def forward(self, x):
        return x + self.block(x)


class GarmentSynthesisNet(nn.Module):
    """Maps a person representation ([0,1], C channels) to garment + mask."""

    def __init__(self, cfg: GsConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.base_width
        layers: list[nn.Module] = [
            nn.ReflectionPad2d(3), nn.Conv2d(cfg.in_channels, w, 7),
            _norm_layer(cfg.norm, w), nn.ReLU(inplace=True),
        ]
        widths = [min(w * 2 ** i, w * 8) for i in range(cfg.n_downsample + 1)]
        for i in range(cfg.n_downsample):
            layers += [nn.Conv2d(widths[i], widths[i + 1], 3, stride=2, padding=1),
                       _norm_layer(cfg.norm, widths[i + 1]), nn.ReLU(inplace=True)]
        for _ in range(cfg.n_blocks):
            layers.append(_ResidualBlock(widths[-1], cfg.norm))
        for i in reversed(range(cfg.n_downsample)):
            layers += [nn.ConvTranspose2d(widths[i + 1], widths[i], 3, stride=2,
                                          padding=1, output_padding=1),
                       _norm_layer(cfg.norm, widths[i]), nn.ReLU(inplace=True)]
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(w, 4, 7)]
        self.net = nn.Sequential(*layers)
        self.skip = nn.Conv2d(cfg.in_channels, 4, 1) if cfg.input_skip else None

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if x.shape[1] != self.cfg.in_channels:
            raise InputError(f"{self.cfg.mode} mode expects {self.cfg.in_channels} channels, "
                             f"got {x.shape[1]}")
        div = 2 ** self.cfg.n_downsample
        if x.shape[-1] % div or x.shape[-2] % div:
            raise InputError(f"input dims must be divisible by {div}")
        x2 = x * 2.0 - 1.0
        h = self.net(x2)
        if self.skip is not None:
            h = h + self.skip(x2)
        garment = (torch.tanh(h[:, :3]) + 1.0) / 2.0
        mask = torch.sigmoid(h[:, 3:4])
        return garment, mask


class PatchDiscriminator(nn.Module):
    """PatchGAN scorer returning intermediate features plus the score map."""

    def __init__(self, in_channels: int, base_width: int = 64, n_layers: int = 3):
        super().__init__()
        kw, padw = 4, 2
        blocks = [nn.Sequential(nn.Conv2d(in_channels, base_width, kw, 2, padw),
                                nn.LeakyReLU(0.2, inplace=True))]
        w = base_width
        for _ in range(1, n_layers):
            w_next = min(w * 2, base_width * 8)
            blocks.append(nn.Sequential(nn.Conv2d(w, w_next, kw, 2, padw),
                                        nn.InstanceNorm2d(w_next),
                                        nn.LeakyReLU(0.2, inplace=True)))
            w = w_next
        w_next = min(w * 2, base_width * 8)
        blocks.append(nn.Sequential(nn.Conv2d(w, w_next, kw, 1, padw),
                                    nn.InstanceNorm2d(w_next),
                                    nn.LeakyReLU(0.2, inplace=True)))
        self.blocks = nn.ModuleList(blocks)
        self.score = nn.Conv2d(w_next, 1, kw, 1, padw)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = x
        for block in self.blocks:
            h = block(h)
            feats.append(h)
        feats.append(self.score(h))
        return feats


class MultiScaleDiscriminator(nn.Module):
    """Two patch discriminators on progressively downsampled inputs; scores
    always see the condition concatenated with the image under judgement."""

    def __init__(self, cond_channels: int, image_channels: int = 4,
                 base_width: int = 64, n_layers: int = 3, n_scales: int = 2):
        super().__init__()
        in_ch = cond_channels + image_channels
        self.scales = nn.ModuleList(
            [PatchDiscriminator(in_ch, base_width, n_layers) for _ in range(n_scales)])
        self.down = nn.AvgPool2d(3, stride=2, padding=1, count_include_pad=False)

    def forward(self, condition: torch.Tensor, image: torch.Tensor) -> list[list[torch.Tensor]]:
        """Returns per-scale feature lists; the last entry of each list is the
        raw score map."""
        x = torch.cat([condition, image], dim=1)
        outputs = []
        for i, disc in enumerate(self.scales):
            outputs.append(disc(x))
            if i + 1 < len(self.scales):
                x = self.down(x)
        return outputs


DiscriminatorFeatures = list  # list (scales) of list (layers) of tensors


def scores_of(features: DiscriminatorFeatures) -> list[torch.Tensor]:
    return [scale[-1] for scale in features]


def _as_score_list(scores) -> list[torch.Tensor]:
    if isinstance(scores, (int, float)):
        return [torch.tensor(float(scores))]
    if torch.is_tensor(scores):
        return [scores]
    if isinstance(scores, np.ndarray):
        return [torch.from_numpy(scores.astype(np.float64))]
    return [s if torch.is_tensor(s) else torch.tensor(np.asarray(s, dtype=np.float64))
            for s in scores]


def gan_loss(d_real, d_fake, variant: str = "log") -> tuple[torch.Tensor, torch.Tensor]:
    """Adversarial objective on discriminator scores.

    In the probability ("log") form the underlying quantity is
    E[log D(x,y)] + E[log(1 - D(x, GS(x)))], which the discriminator maximizes
    and the generator minimizes; scores equal to 0 or 1 are eps-clamped before
    the log. Returns (discriminator_loss, generator_loss), both to minimize.
    The "lsgan" variant operates on raw score maps.
    """
    real = _as_score_list(d_real)
    fake = _as_score_list(d_fake)
    if variant == "log":
        real_term = torch.stack([torch.log(r.clamp(GAN_EPS, 1.0 - GAN_EPS)).mean()
                                 for r in real]).mean()
        fake_term = torch.stack([torch.log((1.0 - f).clamp(GAN_EPS, 1.0 - GAN_EPS)).mean()
                                 for f in fake]).mean()
        value = real_term + fake_term
        return -value, fake_term
    if variant == "lsgan":
        d_loss = torch.stack([((r - 1.0) ** 2).mean() for r in real]).mean() * 0.5 + \
            torch.stack([(f ** 2).mean() for f in fake]).mean() * 0.5
        g_loss = torch.stack([((f - 1.0) ** 2).mean() for f in fake]).mean()
        return d_loss, g_loss
    raise ConfigError(f"unknown gan variant '{variant}'")


def gan_value(d_real, d_fake) -> float:
    """The probability-form objective value itself (diagnostics and tests)."""
    d_loss, _ = gan_loss(d_real, d_fake, variant="log")
    return float(-d_loss)


def feature_matching_loss(real: DiscriminatorFeatures, fake: DiscriminatorFeatures) -> torch.Tensor:
    """Mean absolute difference between real and fake discriminator features,
    averaged over layers and scales. Real features do not carry gradient."""
    if len(real) != len(fake) or any(len(r) != len(f) for r, f in zip(real, fake)):
        raise InputError("feature matching needs identical layer lists")
    terms = []
    for scale_r, scale_f in zip(real, fake):
        for fr, ff in zip(scale_r, scale_f):
            if fr.shape != ff.shape:
                raise InputError("feature matching needs matching feature shapes")
            terms.append((fr.detach() - ff).abs().mean())
    return torch.stack(terms).mean()


class FeatureExtractor(Protocol):
    """Perceptual feature backbone: a fixed layer set with per-layer weights."""

    layer_weights: Sequence[float]

    def extract(self, images: torch.Tensor) -> list[torch.Tensor]: ...


class IdentityExtractor:
    """Features are the pixels themselves; the perceptual loss degenerates to
    a pixel L1, which keeps tests independent of pretrained weights."""

    layer_weights = (1.0,)

    def extract(self, images: torch.Tensor) -> list[torch.Tensor]:
        return [images]


class TorchvisionVggExtractor:
    """Conv features of a pretrained VGG19, weighted [1/32,1/16,1/8,1/4,1].

    Requires torchvision with downloadable weights; injected by the caller,
    never constructed implicitly.
    """

    layer_weights = (1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0)
    _slices = (2, 7, 12, 21, 30)

    def __init__(self):
        try:
            from torchvision import models
            vgg = models.vgg19(weights=models.VGG19_Weights.DEFAULT).features.eval()
        except Exception as exc:
            raise ConfigError(f"pretrained VGG backbone unavailable: {exc}") from exc
        for p in vgg.parameters():
            p.requires_grad_(False)
        self.vgg = vgg

    def extract(self, images: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = images
        prev = 0
        for stop in self._slices:
            for layer in self.vgg[prev:stop]:
                h = layer(h)
            feats.append(h)
            prev = stop
        return feats


def perceptual_loss(pred_garment: torch.Tensor, pred_mask: torch.Tensor,
                    target_garment: torch.Tensor,
                    extractor: Optional[FeatureExtractor]) -> torch.Tensor:
    """Weighted L1 in feature space between the mask-gated prediction and the
    stored garment image (whose background is already zero)."""
    if extractor is None:
        raise ConfigError("perceptual loss needs a feature extractor (or weight 0)")
    masked = pred_garment * pred_mask
    feats_pred = extractor.extract(masked)
    feats_target = extractor.extract(target_garment)
    total = masked.new_zeros(())
    for w, fp, ft in zip(extractor.layer_weights, feats_pred, feats_target):
        total = total + w * (fp - ft.detach()).abs().mean()
    return total


@dataclass
class LossBreakdown:
    """Per-step objective decomposition; total honors the configured weights."""

    gan_d: float
    gan_g: float
    fm: float
    vgg: float
    lambda_fm: float
    lambda_vgg: float

    @property
    def total_g(self) -> float:
        return self.gan_g + self.lambda_fm * self.fm + self.lambda_vgg * self.vgg

    def to_dict(self) -> dict:
        return {"gan_d": self.gan_d, "gan_g": self.gan_g, "fm": self.fm, "vgg": self.vgg,
                "lambda_fm": self.lambda_fm, "lambda_vgg": self.lambda_vgg,
                "total_g": self.total_g}


def total_objective(gan_g: torch.Tensor, fm: torch.Tensor, vgg: torch.Tensor,
                    lambda_fm: float = 1.0, lambda_vgg: float = 1.0) -> torch.Tensor:
    """Generator objective: adversarial term plus weighted feature-matching
    and perceptual terms."""
    if lambda_fm < 0 or lambda_vgg < 0:
        raise ConfigError("loss weights must be non-negative")
    return gan_g + lambda_fm * fm + lambda_vgg * vgg


def probabilities(score_maps: list[torch.Tensor]) -> list[torch.Tensor]:
    return [torch.sigmoid(s) for s in score_maps]


# --------------------------------------------------------------------------
# checkpoint container and inference-time synthesizers


def save_checkpoint(path, cfg: GsConfig, generator: GarmentSynthesisNet,
                    discriminator: Optional[MultiScaleDiscriminator] = None,
                    optimizers: Optional[dict] = None, step: int = 0, epoch: int = 0,
                    dataset_hash: str = "", extra: Optional[dict] = None) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": asdict(cfg),
        "mode": cfg.mode,
        "generator": generator.state_dict(),
        "discriminator": discriminator.state_dict() if discriminator is not None else None,
        "optimizers": optimizers or {},
        "step": step,
        "epoch": epoch,
        "dataset_hash": dataset_hash,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise InputError(f"unsupported checkpoint format {version}")
    return payload


class TorchSynthesizer:
    """Frozen generator snapshot for inference; safe for concurrent readers."""

    def __init__(self, cfg: GsConfig, generator: GarmentSynthesisNet):
        self.cfg = cfg
        self.mode = RepresentationMode(cfg.mode)
        self.roi_side = cfg.roi_side
        self.generator = generator.eval()

    @staticmethod
    def from_checkpoint(path) -> "TorchSynthesizer":
        payload = load_checkpoint(path)
        cfg = GsConfig(**payload["arch"])
        net = GarmentSynthesisNet(cfg)
        net.load_state_dict(payload["generator"])
        return TorchSynthesizer(cfg, net)

    def synthesize(self, rep: HybridRepresentation) -> GsOutput:
        if rep.mode is not self.mode:
            raise InputError(f"checkpoint was trained in {self.mode.value} mode, "
                             f"got {rep.mode.value} input")
        x = torch.from_numpy(np.ascontiguousarray(rep.data, dtype=np.float32))[None]
        with torch.no_grad():
            garment, mask = self.generator(x)
        return GsOutput(garment=garment[0].numpy(), mask=mask[0, 0].numpy())


class ConstantColorSynthesizer:
    """Deterministic probe synthesizer: constant garment color and a fixed
    mask pattern. Used for engine tests and garment-switch verification."""

    def __init__(self, color: tuple[float, float, float], mask_kind: str = "full",
                 mode: str = "hybrid", roi_side: int = 64):
        self.color = tuple(float(c) for c in color)
        if mask_kind not in ("full", "zero", "input_silhouette"):
            raise ConfigError(f"unknown stub mask kind '{mask_kind}'")
        self.mask_kind = mask_kind
        self.mode = RepresentationMode(mode)
        self.roi_side = roi_side

    def synthesize(self, rep: HybridRepresentation) -> GsOutput:
        if rep.mode is not self.mode:
            raise InputError(f"stub expects {self.mode.value} mode, got {rep.mode.value}")
        h, w = rep.data.shape[1:]
        garment = np.empty((3, h, w), dtype=np.float32)
        for c in range(3):
            garment[c] = self.color[c]
        if self.mask_kind == "full":
            mask = np.ones((h, w), dtype=np.float32)
        elif self.mask_kind == "zero":
            mask = np.zeros((h, w), dtype=np.float32)
        else:
            mask = (rep.data.max(axis=0) > 0).astype(np.float32)
        return GsOutput(garment=garment, mask=mask)

    def to_json(self) -> str:
        return json.dumps({"kind": "constant_color", "color": list(self.color),
                           "mask": self.mask_kind, "mode": self.mode.value,
                           "roi_side": self.roi_side})


def load_synthesizer(path):
    """Open an inference synthesizer: torch checkpoints or JSON-defined probe
    stubs (dispatch on extension)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no checkpoint at {path}")
    if path.suffix == ".json":
        spec = json.loads(path.read_text())
        if spec.get("kind") != "constant_color":
            raise InputError(f"unknown stub checkpoint kind {spec.get('kind')}")
        return ConstantColorSynthesizer(spec["color"], spec.get("mask", "full"),
                                        spec.get("mode", "hybrid"), spec.get("roi_side", 64))
    return TorchSynthesizer.from_checkpoint(path)
