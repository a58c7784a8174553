"""Perception backends: 3D pose, dense body-surface maps, and garment parsing.

Real estimators are external tools; this module defines the interfaces, the
subprocess adapters that talk to them, and deterministic synthetic stubs so
the whole pipeline runs without model weights. Stubs are pure functions of
(frame, seed): identical inputs give bit-identical outputs.

The stub world model is geometric: a person is the largest connected
foreground blob; body regions are fixed fractions of its bounding box
(shared with :mod:`tryon.synthetic`, which draws matching figures).
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, runtime_checkable

import numpy as np
from scipy import ndimage

from . import body, densepose, measurement
from .densepose import DensePoseMap
from .errors import BackendError, InputError
from .imaging import Image, SoftMask, ensure_image, load_image, save_image
from .measurement import GridTexture, WeakPerspectiveCamera

FOREGROUND_THRESHOLD = 0.02

# body-region chart, as fractions of the blob bounding box height (rows from
# the top) and half-widths relative to the same height
HEAD_ROWS = (0.0, 0.15)
TORSO_ROWS = (0.15, 0.55)
LEG_ROWS = (0.55, 1.0)
THIGH_ROWS = (0.55, 0.78)
SHIN_ROWS = (0.78, 0.95)
UPPER_ARM_ROWS = (0.17, 0.30)
FOREARM_ROWS = (0.30, 0.44)
TORSO_HALF_WIDTH = 0.11
GARMENT_ROWS = TORSO_ROWS  # the stub parser treats the torso band as "shirt"


@dataclass
class BodyPoseEstimate:
    """Body pose: 10 shape scalars, 72 pose scalars (24 axis-angle joints),
    and a weak-perspective camera mapping the mesh to image pixels."""

    shape_params: np.ndarray
    pose_params: np.ndarray
    camera: WeakPerspectiveCamera
    confidence: float = 1.0

    def __post_init__(self):
        self.shape_params = np.asarray(self.shape_params, dtype=np.float64)
        self.pose_params = np.asarray(self.pose_params, dtype=np.float64)
        if self.shape_params.shape != (body.NUM_SHAPE_PARAMS,):
            raise InputError("shape_params must have length 10")
        if self.pose_params.shape != (body.NUM_POSE_PARAMS,):
            raise InputError("pose_params must have length 72")
        if not np.all(np.isfinite(self.pose_params)):
            raise InputError("pose_params must be finite")


@dataclass
class ParseResult:
    """Binarized garment mask plus the input masked to garment pixels."""

    garment_mask: SoftMask
    garment_image: Image


@runtime_checkable
class PoseBackend(Protocol):
    name: str

    def available(self) -> bool: ...

    def estimate_pose(self, frame: Image) -> Optional[BodyPoseEstimate]: ...


@runtime_checkable
class DensePoseBackend(Protocol):
    name: str

    def available(self) -> bool: ...

    def estimate_densepose(self, frame: Image) -> Optional[DensePoseMap]: ...


@runtime_checkable
class ParseBackend(Protocol):
    name: str

    def available(self) -> bool: ...

    def parse_garment(self, frame: Image) -> ParseResult: ...


def foreground_mask(frame: Image, threshold: float = FOREGROUND_THRESHOLD) -> np.ndarray:
    ensure_image(frame, channels=3, name="frame")
    return frame.max(axis=0) > threshold


def largest_blob_bbox(frame: Image) -> Optional[tuple[int, int, int, int]]:
    """Bounding box (top, left, bottom, right) of the largest connected
    foreground component, by bbox area; None when the frame is blank."""
    fg = foreground_mask(frame)
    labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return None
    best, best_area = None, -1
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        h = sl[0].stop - sl[0].start
        w = sl[1].stop - sl[1].start
        if h * w > best_area:
            best_area = h * w
            best = (sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1)
    return best


class StubPoseBackend:
    """Deterministic pose stub: canonical pose and shape are drawn once from
    the seed; the camera is fitted to the detected blob."""

    name = "stub"
    stateless = True

    def __init__(self, seed: int = 0):
        self.seed = seed
        rng = np.random.default_rng(seed)
        theta = np.zeros(body.NUM_POSE_PARAMS)
        # drop the arms from the template T-pose by a seed-determined angle
        drop = rng.uniform(0.45, 1.0)
        theta[body.JOINT_INDEX["left_shoulder"] * 3 + 2] = -drop
        theta[body.JOINT_INDEX["right_shoulder"] * 3 + 2] = drop
        elbow = rng.uniform(0.0, 0.35)
        theta[body.JOINT_INDEX["left_elbow"] * 3 + 2] = -elbow
        theta[body.JOINT_INDEX["right_elbow"] * 3 + 2] = elbow
        self._theta = theta
        betas = np.zeros(body.NUM_SHAPE_PARAMS)
        betas[0] = rng.uniform(-0.5, 0.5)
        self._betas = betas

    def available(self) -> bool:
        return True

    def canonical_parameters(self) -> tuple[np.ndarray, np.ndarray]:
        return self._theta.copy(), self._betas.copy()

    def estimate_pose(self, frame: Image) -> Optional[BodyPoseEstimate]:
        box = largest_blob_bbox(frame)
        if box is None:
            return None
        top, left, bottom, right = box
        height_px = bottom - top + 1
        size = 1.0 + 0.05 * self._betas[0]
        scale = height_px / (body.BODY_HEIGHT * size)
        tx = (left + right + 1) / 2.0
        ty = float(bottom + 1)  # feet (y=0) sit at the blob's bottom edge
        camera = WeakPerspectiveCamera(scale=scale, tx=tx, ty=ty)
        return BodyPoseEstimate(self._betas.copy(), self._theta.copy(), camera, confidence=1.0)


def _band(top: int, height: int, rows: tuple[float, float]) -> tuple[int, int]:
    return top + int(round(rows[0] * height)), top + int(round(rows[1] * height))


class StubDensePoseBackend:
    """Deterministic surface-map stub: part indices follow the fixed body
    chart inside the blob box; part is nonzero exactly on the silhouette."""

    name = "stub"
    stateless = True

    def available(self) -> bool:
        return True

    def estimate_densepose(self, frame: Image) -> Optional[DensePoseMap]:
        box = largest_blob_bbox(frame)
        if box is None:
            return None
        top, left, bottom, right = box
        h, w = frame.shape[1:]
        height = bottom - top + 1
        fg = foreground_mask(frame)
        keep = np.zeros_like(fg)
        keep[top:bottom + 1, left:right + 1] = True
        fg &= keep

        parts = np.zeros((h, w), dtype=np.int16)
        rr, cc = np.nonzero(fg)
        rel = (rr - top) / max(height, 1)
        cx = (left + right + 1) / 2.0
        half_torso = TORSO_HALF_WIDTH * height
        left_side = cc < cx

        head = rel < HEAD_ROWS[1]
        torso_band = (rel >= TORSO_ROWS[0]) & (rel < TORSO_ROWS[1])
        in_torso_cols = np.abs(cc + 0.5 - cx) <= half_torso
        torso = torso_band & in_torso_cols
        arm = torso_band & ~in_torso_cols
        upper_arm = arm & (rel < UPPER_ARM_ROWS[1])
        forearm = arm & (rel >= FOREARM_ROWS[0]) & (rel < FOREARM_ROWS[1])
        hand = arm & (rel >= FOREARM_ROWS[1])
        thigh = (rel >= THIGH_ROWS[0]) & (rel < THIGH_ROWS[1])
        shin = (rel >= SHIN_ROWS[0]) & (rel < SHIN_ROWS[1])
        foot = rel >= SHIN_ROWS[1]

        def assign(sel, left_part, right_part):
            parts[rr[sel & left_side], cc[sel & left_side]] = left_part
            parts[rr[sel & ~left_side], cc[sel & ~left_side]] = right_part

        assign(head, 23, 24)
        assign(torso, 1, 2)
        assign(upper_arm, 15, 16)
        assign(forearm, 19, 20)
        assign(hand, 3, 4)
        assign(thigh, 7, 8)
        assign(shin, 11, 12)
        assign(foot, 5, 6)

        u = np.zeros((h, w), dtype=np.float32)
        v = np.zeros((h, w), dtype=np.float32)
        on = parts > 0
        width = max(right - left + 1, 1)
        u[on] = ((np.nonzero(on)[1] - left) / width).astype(np.float32)
        v[on] = ((np.nonzero(on)[0] - top) / height).astype(np.float32)
        return DensePoseMap(parts, u, v)


class StubParseBackend:
    """Deterministic parser stub: the garment is the torso band of the blob."""

    name = "stub"
    stateless = True

    def available(self) -> bool:
        return True

    def parse_garment(self, frame: Image) -> ParseResult:
        box = largest_blob_bbox(frame)
        h, w = frame.shape[1:]
        mask = np.zeros((h, w), dtype=np.float32)
        if box is not None:
            top, left, bottom, right = box
            height = bottom - top + 1
            r0, r1 = _band(top, height, GARMENT_ROWS)
            cx = (left + right + 1) / 2.0
            half = TORSO_HALF_WIDTH * height
            c0 = int(np.ceil(cx - half - 0.5))
            c1 = int(np.floor(cx + half - 0.5)) + 1
            region = np.zeros((h, w), dtype=bool)
            region[max(r0, 0):min(r1, h), max(c0, 0):min(c1, w)] = True
            mask = ((foreground_mask(frame) & region)).astype(np.float32)
        mask = (mask >= 0.5).astype(np.float32)
        return ParseResult(garment_mask=mask, garment_image=(frame * mask[None]).astype(np.float32))


class DerivedGarmentParseBackend:
    """Parser stub for closed-loop experiments: the 'garment' is a fixed
    channel recoloring of the measurement render, masked to its silhouette.

    The synthesis target becomes a deterministic function of the network
    input, which makes per-garment training measurable without real capture.
    """

    name = "derived"
    stateless = True

    def __init__(self, pose_backend: PoseBackend,
                 texture: GridTexture = GridTexture(),
                 color_matrix: Optional[np.ndarray] = None):
        self.pose_backend = pose_backend
        self.texture = texture
        if color_matrix is None:
            color_matrix = np.array([[0.0, 1.0, 0.0],
                                     [0.0, 0.0, 1.0],
                                     [1.0, 0.0, 0.0]])
        self.color_matrix = np.asarray(color_matrix, dtype=np.float32)

    def available(self) -> bool:
        return self.pose_backend.available()

    def parse_garment(self, frame: Image) -> ParseResult:
        h, w = frame.shape[1:]
        est = self.pose_backend.estimate_pose(frame)
        if est is None:
            empty = np.zeros((h, w), dtype=np.float32)
            return ParseResult(empty, np.zeros((3, h, w), dtype=np.float32))
        mesh = measurement.trim_body_mesh(est.pose_params, est.shape_params)
        vm = measurement.render_measurement_garment(mesh, self.texture, est.camera, h, w)
        sil = measurement.silhouette(vm)
        garment = np.clip(np.einsum("ij,jhw->ihw", self.color_matrix, vm), 0.0, 1.0)
        return ParseResult(sil, (garment * sil[None]).astype(np.float32))


class FailingBackendWrapper:
    """Fault injection for tests and robustness drills: raises BackendError
    on the configured 0-based call indices."""

    def __init__(self, inner, fail_on: set[int]):
        self.inner = inner
        self.fail_on = set(fail_on)
        self.calls = 0
        self.name = f"failing({getattr(inner, 'name', '?')})"
        self.stateless = False

    def available(self) -> bool:
        return self.inner.available()

    def _tick(self):
        idx = self.calls
        self.calls += 1
        if idx in self.fail_on:
            raise BackendError(f"injected failure on call {idx}")

    def estimate_pose(self, frame):
        self._tick()
        return self.inner.estimate_pose(frame)

    def estimate_densepose(self, frame):
        self._tick()
        return self.inner.estimate_densepose(frame)

    def parse_garment(self, frame):
        self._tick()
        return self.inner.parse_garment(frame)


class SubprocessBackendBase:
    """Adapter for external estimators: frames go out as PNG files, results
    come back as JSON (and PNG planes for image-valued outputs).

    Invocation: ``command <frame.png> <out_dir>``; the tool writes
    ``result.json`` into ``out_dir``.
    """

    def __init__(self, command: list[str], name: str = "external"):
        if not command:
            raise InputError("external backend needs a command")
        self.command = list(command)
        self.name = name
        self.stateless = False

    def available(self) -> bool:
        exe = self.command[0]
        return shutil.which(exe) is not None or Path(exe).exists()

    def _run(self, frame: Image) -> tuple[dict, Path]:
        if not self.available():
            raise BackendError(f"backend command not found: {self.command[0]}")
        tmp = Path(tempfile.mkdtemp(prefix="tryon_backend_"))
        frame_path = tmp / "frame.png"
        save_image(frame_path, frame)
        try:
            proc = subprocess.run(self.command + [str(frame_path), str(tmp)],
                                  capture_output=True, timeout=120)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendError(f"backend invocation failed: {exc}") from exc
        if proc.returncode != 0:
            raise BackendError(f"backend exited {proc.returncode}: {proc.stderr.decode(errors='replace')[:500]}")
        result_path = tmp / "result.json"
        if not result_path.exists():
            raise BackendError("backend produced no result.json")
        return json.loads(result_path.read_text()), tmp


class SubprocessPoseBackend(SubprocessBackendBase):
    def estimate_pose(self, frame: Image) -> Optional[BodyPoseEstimate]:
        result, _ = self._run(frame)
        if not result.get("detected", True):
            return None
        cam = result["camera"]
        return BodyPoseEstimate(
            shape_params=np.asarray(result["shape_params"], dtype=np.float64),
            pose_params=np.asarray(result["pose_params"], dtype=np.float64),
            camera=WeakPerspectiveCamera(cam["scale"], cam["tx"], cam["ty"]),
            confidence=float(result.get("confidence", 1.0)),
        )


class SubprocessDensePoseBackend(SubprocessBackendBase):
    def estimate_densepose(self, frame: Image) -> Optional[DensePoseMap]:
        result, tmp = self._run(frame)
        if not result.get("detected", True):
            return None
        planes = result["planes"]  # three PNG file names relative to out_dir
        part_img = load_image(tmp / planes["part"], channels=1)[0]
        u_img = load_image(tmp / planes["u"], channels=1)[0]
        v_img = load_image(tmp / planes["v"], channels=1)[0]
        parts = np.round(part_img.astype(np.float64) * densepose.NUM_PARTS).astype(np.int16)
        bg = parts == 0
        u_img = u_img.copy()
        v_img = v_img.copy()
        u_img[bg] = 0.0
        v_img[bg] = 0.0
        return DensePoseMap(parts, u_img, v_img)


class SubprocessParseBackend(SubprocessBackendBase):
    def parse_garment(self, frame: Image) -> ParseResult:
        result, tmp = self._run(frame)
        mask = load_image(tmp / result["mask"], channels=1)[0]
        mask = (mask >= 0.5).astype(np.float32)
        garment = load_image(tmp / result["garment"], channels=3)
        return ParseResult(mask, (garment * mask[None]).astype(np.float32))


BACKEND_DIR_ENV = "TRYON_BACKEND_DIR"


def _external_command(kind: str) -> list[str]:
    root = os.environ.get(BACKEND_DIR_ENV)
    if not root:
        raise BackendError(f"external backends need {BACKEND_DIR_ENV} to be set")
    spec_path = Path(root) / f"{kind}_backend.json"
    if not spec_path.exists():
        raise BackendError(f"no adapter spec at {spec_path}")
    return json.loads(spec_path.read_text())["command"]


def make_pose_backend(name: str, seed: int = 0) -> PoseBackend:
    if name == "stub":
        return StubPoseBackend(seed)
    if name == "external":
        return SubprocessPoseBackend(_external_command("pose"), name="external")
    raise BackendError(f"unknown pose backend '{name}'")


def make_densepose_backend(name: str) -> DensePoseBackend:
    if name == "stub":
        return StubDensePoseBackend()
    if name == "external":
        return SubprocessDensePoseBackend(_external_command("densepose"), name="external")
    raise BackendError(f"unknown densepose backend '{name}'")


def make_parse_backend(name: str, pose_backend: Optional[PoseBackend] = None) -> ParseBackend:
    if name == "stub":
        return StubParseBackend()
    if name == "derived":
        return DerivedGarmentParseBackend(pose_backend or StubPoseBackend())
    if name == "external":
        return SubprocessParseBackend(_external_command("parse"), name="external")
    raise BackendError(f"unknown parse backend '{name}'")


@dataclass
class PerceptionSet:
    """The three backends the pipeline needs, probed as a unit."""

    pose: PoseBackend
    densepose: DensePoseBackend
    parse: ParseBackend

    def probe(self) -> None:
        """Refuse to start when any required backend is absent; the pipeline
        never silently degrades."""
        missing = [label for label, b in
                   (("pose", self.pose), ("densepose", self.densepose), ("parse", self.parse))
                   if not b.available()]
        if missing:
            raise BackendError(f"required backends unavailable: {', '.join(missing)}")

    @staticmethod
    def stubs(seed: int = 0, derived_garment: bool = False) -> "PerceptionSet":
        pose = StubPoseBackend(seed)
        parse = DerivedGarmentParseBackend(pose) if derived_garment else StubParseBackend()
        return PerceptionSet(pose=pose, densepose=StubDensePoseBackend(), parse=parse)

    @staticmethod
    def from_names(pose: str = "stub", densepose_name: str = "stub", parse: str = "stub",
                   seed: int = 0) -> "PerceptionSet":
        pose_backend = make_pose_backend(pose, seed)
        return PerceptionSet(
            pose=pose_backend,
            densepose=make_densepose_backend(densepose_name),
            parse=make_parse_backend(parse, pose_backend),
        )
