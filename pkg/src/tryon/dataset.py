"""Per-garment dataset generation from capture video.

A capture session is a person wearing the target garment, mimicking 14
predefined symmetric poses while slowly turning in place (about two minutes
total). Each usable frame becomes one aligned record: measurement-garment
render, simplified surface map (plus the raw map for ablations), garment
image, and garment mask, all cropped by the same upper-body square.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import densepose, imaging, measurement
from .errors import BackendError, EmptyDatasetError, InputError
from .imaging import BILINEAR, NEAREST, RoiTransform
from .perception import PerceptionSet

log = logging.getLogger(__name__)

PIPELINE_VERSION = "1"

POSE_NAMES = [
    "arms relaxed at sides",
    "arms slightly out",
    "arms raised to shoulders",
    "arms overhead",
    "hands on hips",
    "arms forward",
    "arms crossed",
    "elbows bent upward",
    "hands behind back",
    "arms out, elbows bent down",
    "hands clasped in front",
    "one step stance, arms out",
    "lean forward, arms down",
    "arms out wide",
]


@dataclass(frozen=True)
class PoseDescriptor:
    name: str
    guide_image: str
    duration_s: Optional[float] = None  # None = uniform share of the session


@dataclass(frozen=True)
class CaptureProtocol:
    poses: tuple[PoseDescriptor, ...]
    rotation_degrees: float = 360.0
    total_duration_s: float = 120.0

    def __post_init__(self):
        if len(self.poses) != 14:
            raise InputError("the capture protocol has exactly 14 poses")


def default_capture_protocol() -> CaptureProtocol:
    poses = tuple(PoseDescriptor(name=n, guide_image=f"pose_{i:02d}.png")
                  for i, n in enumerate(POSE_NAMES))
    return CaptureProtocol(poses=poses)


@dataclass(frozen=True)
class GuideEntry:
    index: int
    name: str
    guide_image: str
    start_s: float
    duration_s: float
    rotation_degrees: float


def capture_session_guide(protocol: Optional[CaptureProtocol] = None) -> list[GuideEntry]:
    """Timed guidance script consumed by the companion UI's capture mode."""
    protocol = protocol or default_capture_protocol()
    explicit = sum(p.duration_s or 0.0 for p in protocol.poses)
    n_uniform = sum(1 for p in protocol.poses if p.duration_s is None)
    uniform = (protocol.total_duration_s - explicit) / n_uniform if n_uniform else 0.0
    entries = []
    t = 0.0
    for i, p in enumerate(protocol.poses):
        d = p.duration_s if p.duration_s is not None else uniform
        entries.append(GuideEntry(i, p.name, p.guide_image, t, d, protocol.rotation_degrees))
        t += d
    return entries


def guide_to_json(entries: Sequence[GuideEntry]) -> str:
    return json.dumps({
        "poses": [{
            "index": e.index,
            "name": e.name,
            "guide_image": e.guide_image,
            "start_s": e.start_s,
            "duration_s": e.duration_s,
            "rotation_degrees": e.rotation_degrees,
        } for e in entries],
        "total_s": sum(e.duration_s for e in entries),
    }, indent=1)


@dataclass
class DatasetRecord:
    frame_id: int
    vm_path: str
    sdp_path: str
    dp_path: str
    garment_path: str
    mask_path: str
    roi: RoiTransform
    pose_confidence: float = 1.0
    border_flag: bool = False

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "vm_path": self.vm_path,
            "sdp_path": self.sdp_path,
            "dp_path": self.dp_path,
            "garment_path": self.garment_path,
            "mask_path": self.mask_path,
            "roi": self.roi.to_dict(),
            "pose_confidence": self.pose_confidence,
            "border_flag": self.border_flag,
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetRecord":
        return DatasetRecord(
            frame_id=d["frame_id"], vm_path=d["vm_path"], sdp_path=d["sdp_path"],
            dp_path=d["dp_path"], garment_path=d["garment_path"], mask_path=d["mask_path"],
            roi=RoiTransform.from_dict(d["roi"]), pose_confidence=d["pose_confidence"],
            border_flag=d["border_flag"],
        )

    def image_paths(self) -> list[str]:
        return [self.vm_path, self.sdp_path, self.dp_path, self.garment_path, self.mask_path]


@dataclass
class DatasetManifest:
    garment_id: str
    records: list[DatasetRecord]
    simplification_set: tuple[int, ...]
    capture: dict  # resolution, fps
    pipeline_version: str
    content_hash: str
    skipped: list[dict] = field(default_factory=list)
    roi_side: int = 512
    working_short_side: int = 1024

    def to_dict(self) -> dict:
        return {
            "garment_id": self.garment_id,
            "records": [r.to_dict() for r in self.records],
            "simplification_set": list(self.simplification_set),
            "capture": self.capture,
            "pipeline_version": self.pipeline_version,
            "content_hash": self.content_hash,
            "skipped": self.skipped,
            "roi_side": self.roi_side,
            "working_short_side": self.working_short_side,
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetManifest":
        return DatasetManifest(
            garment_id=d["garment_id"],
            records=[DatasetRecord.from_dict(r) for r in d["records"]],
            simplification_set=tuple(d["simplification_set"]),
            capture=d["capture"],
            pipeline_version=d["pipeline_version"],
            content_hash=d["content_hash"],
            skipped=d.get("skipped", []),
            roi_side=d.get("roi_side", 512),
            working_short_side=d.get("working_short_side", 1024),
        )


@dataclass
class DatasetBuildConfig:
    garment_id: str = "garment"
    out_dir: str = "dataset"
    roi_side: int = 512
    working_short_side: int = 1024
    roi_pad: float = 0.15
    simplification_set: tuple[int, ...] = densepose.DEFAULT_SIMPLIFICATION_SET
    texture: measurement.GridTexture = field(default_factory=measurement.GridTexture)
    workers: int = 1


def _content_hash(out_dir: Path, records: list[DatasetRecord], config_payload: dict) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(config_payload, sort_keys=True).encode())
    for rec in records:
        h.update(json.dumps(rec.to_dict(), sort_keys=True).encode())
        for rel in rec.image_paths():
            h.update((out_dir / rel).read_bytes())
    return h.hexdigest()


def _process_frame(frame_id, frame, backends: PerceptionSet, cfg: DatasetBuildConfig,
                   texture: measurement.GridTexture):
    """Returns (record_data, skip_reason); record_data holds the five ROI
    images ready to persist."""
    h, w = frame.shape[1:]
    short = min(h, w)
    if short > cfg.working_short_side:
        s = cfg.working_short_side / short
        frame = imaging.resize(frame, int(round(h * s)), int(round(w * s)), BILINEAR)
        h, w = frame.shape[1:]

    pose = backends.pose.estimate_pose(frame)
    if pose is None:
        return None, "no person detected"
    dp = backends.densepose.estimate_densepose(frame)
    if dp is None:
        return None, "no body surface found"
    parsed = backends.parse.parse_garment(frame)
    if parsed.garment_mask.max() <= 0:
        return None, "no garment pixels"

    roi = densepose.upper_body_roi(dp, target_side=cfg.roi_side, pad=cfg.roi_pad)
    if roi is None:
        return None, "no upper body region"

    mesh = measurement.trim_body_mesh(pose.pose_params, pose.shape_params)
    vm = measurement.render_measurement_garment(mesh, texture, pose.camera, h, w)
    dp_img = densepose.encode_iuv(dp)
    sdp_img = densepose.simplify(dp_img, cfg.simplification_set)

    vm_roi = imaging.roi_extract(vm, roi, BILINEAR)
    sdp_roi = imaging.roi_extract(sdp_img, roi, NEAREST)
    dp_roi = imaging.roi_extract(dp_img, roi, NEAREST)
    # binary masks resample as coverage then re-binarize: a nearest-neighbor
    # crop would alias the boundary against the bilinear-sampled channels
    mask_roi = (imaging.roi_extract(parsed.garment_mask, roi, BILINEAR) >= 0.5) \
        .astype(np.float32)
    garment_roi = imaging.roi_extract(parsed.garment_image, roi, BILINEAR)
    # the stored garment is masked by definition; re-applying the mask removes
    # boundary bleed from the bilinear resample
    garment_roi = garment_roi * mask_roi[None]

    box = densepose.upper_body_bbox(dp)
    border = box is not None and (box[0] == 0 or box[1] == 0 or box[2] == h - 1 or box[3] == w - 1)
    return {
        "frame_id": frame_id,
        "vm": vm_roi, "sdp": sdp_roi, "dp": dp_roi,
        "garment": garment_roi, "mask": mask_roi,
        "roi": roi, "confidence": pose.confidence, "border": border,
    }, None


def build_dataset(source, backends: PerceptionSet, cfg: DatasetBuildConfig) -> DatasetManifest:
    """Process a capture video frame-by-frame into a persisted dataset.

    One record per frame where all three estimations succeed; frames with any
    failure are skipped and counted. Deterministic given (frames, config,
    backends).
    """
    backends.probe()
    out_dir = Path(cfg.out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    texture = cfg.texture

    results = []
    skipped: list[dict] = []
    capture_meta = {"width": None, "height": None, "fps": getattr(source, "fps", None)}

    def work(item):
        frame_id, frame = item
        try:
            return frame_id, frame.shape, _process_frame(frame_id, frame, backends, cfg, texture)
        except BackendError as exc:
            return frame_id, frame.shape, (None, f"backend failure: {exc}")

    stateless = all(getattr(b, "stateless", False)
                    for b in (backends.pose, backends.densepose, backends.parse))
    if cfg.workers > 1 and not stateless:
        # stateful backend instances are confined to one worker each; without
        # a per-worker pool the build falls back to sequential processing
        log.warning("stateful backends present; building with one worker")
    if cfg.workers > 1 and stateless:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(work, iter(source)))
    else:
        outputs = [work(item) for item in iter(source)]

    total = 0
    for frame_id, shape, (data, reason) in outputs:
        total += 1
        if capture_meta["width"] is None:
            capture_meta["height"], capture_meta["width"] = shape[1], shape[2]
        if data is None:
            log.warning("skipping frame %d: %s", frame_id, reason)
            skipped.append({"frame_id": frame_id, "reason": reason})
            continue
        results.append(data)

    if not results:
        raise EmptyDatasetError(f"no usable frames out of {total}")

    records = []
    for data in results:
        fid = data["frame_id"]
        names = {
            "vm": f"frames/{fid:06d}_vm.png",
            "sdp": f"frames/{fid:06d}_sdp.png",
            "dp": f"frames/{fid:06d}_dp.png",
            "garment": f"frames/{fid:06d}_garment.png",
        }
        for key, rel in names.items():
            imaging.save_image(out_dir / rel, data[key])
        mask_rel = f"frames/{fid:06d}_mask.png"
        imaging.save_mask(out_dir / mask_rel, data["mask"])
        records.append(DatasetRecord(
            frame_id=fid, vm_path=names["vm"], sdp_path=names["sdp"], dp_path=names["dp"],
            garment_path=names["garment"], mask_path=mask_rel, roi=data["roi"],
            pose_confidence=data["confidence"], border_flag=data["border"],
        ))

    config_payload = {
        "garment_id": cfg.garment_id,
        "roi_side": cfg.roi_side,
        "working_short_side": cfg.working_short_side,
        "roi_pad": cfg.roi_pad,
        "simplification_set": list(cfg.simplification_set),
        "pipeline_version": PIPELINE_VERSION,
        "grid": [texture.cell_size, texture.line_width,
                 list(texture.line_color), list(texture.fill_color)],
    }
    manifest = DatasetManifest(
        garment_id=cfg.garment_id,
        records=records,
        simplification_set=tuple(cfg.simplification_set),
        capture=capture_meta,
        pipeline_version=PIPELINE_VERSION,
        content_hash=_content_hash(out_dir, records, config_payload),
        skipped=skipped,
        roi_side=cfg.roi_side,
        working_short_side=cfg.working_short_side,
    )
    save_manifest(out_dir / "manifest.json", manifest)
    return manifest


def save_manifest(path, manifest: DatasetManifest) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=1))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise InputError(f"no manifest at {path}")
    return DatasetManifest.from_dict(json.loads(path.read_text()))


@dataclass
class RecordCheck:
    frame_id: int
    ok: bool
    problems: list[str]


@dataclass
class ValidationReport:
    checks: list[RecordCheck]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failing(self) -> list[RecordCheck]:
        return [c for c in self.checks if not c.ok]

    def to_dict(self) -> dict:
        return {"ok": self.ok,
                "records": [{"frame_id": c.frame_id, "ok": c.ok, "problems": c.problems}
                            for c in self.checks]}


def validate_dataset(manifest: DatasetManifest, root) -> ValidationReport:
    """Per-record integrity: files exist, dimensions agree, masks are binary,
    and the garment is zero outside its mask. Problems are reported, never
    thrown."""
    root = Path(root)
    checks = []
    for rec in manifest.records:
        problems = []
        images = {}
        for rel in rec.image_paths():
            p = root / rel
            if not p.exists():
                problems.append(f"missing file: {rel}")
                continue
            try:
                if rel == rec.mask_path:
                    images[rel] = imaging.load_mask(p)[None]
                else:
                    images[rel] = imaging.load_image(p)
            except Exception as exc:  # unreadable counts as failing, not fatal
                problems.append(f"unreadable file {rel}: {exc}")
        if not problems:
            dims = {img.shape[1:] for img in images.values()}
            if len(dims) != 1:
                problems.append(f"dimension mismatch across record images: {sorted(dims)}")
            mask = images[rec.mask_path][0]
            if not np.all(np.isin(mask, (0.0, 1.0))):
                problems.append("mask is not binarized")
            garment = images[rec.garment_path]
            if np.any(garment[:, mask == 0.0] > 1.0 / 255.0):
                problems.append("garment has pixels outside the mask")
        checks.append(RecordCheck(rec.frame_id, not problems, problems))
    return ValidationReport(checks)
