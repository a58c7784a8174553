"""Procedural articulated body mesh with SMPL-compatible parameters.

Accepts the standard parameterisation (10 shape scalars, 72 pose scalars as
24 axis-angle joint rotations, weak-perspective camera) but poses a bundled
procedural template instead of licensed model weights: each body segment is a
capped elliptical tube rigidly skinned to one joint of the 24-joint kinematic
tree. Geometry is an annotation carrier, not an anatomical model.

The per-vertex part-label table ships as a versioned JSON data file with a
checksum and is validated against the procedural construction at load time.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InputError

# 24-joint kinematic tree, standard ordering
JOINT_NAMES = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
]
JOINT_INDEX = {n: i for i, n in enumerate(JOINT_NAMES)}
JOINT_PARENTS = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14,
                 16, 17, 18, 19, 20, 21]

NUM_SHAPE_PARAMS = 10
NUM_POSE_PARAMS = 72

# rest-pose joint locations, body units (y up, x to the subject's left), T-pose
_J = {
    "pelvis": (0.0, 0.95, 0.0),
    "left_hip": (0.09, 0.90, 0.0),
    "right_hip": (-0.09, 0.90, 0.0),
    "spine1": (0.0, 1.06, 0.0),
    "left_knee": (0.09, 0.50, 0.0),
    "right_knee": (-0.09, 0.50, 0.0),
    "spine2": (0.0, 1.18, 0.0),
    "left_ankle": (0.09, 0.08, 0.0),
    "right_ankle": (-0.09, 0.08, 0.0),
    "spine3": (0.0, 1.30, 0.0),
    "left_foot": (0.09, 0.02, 0.09),
    "right_foot": (-0.09, 0.02, 0.09),
    "neck": (0.0, 1.45, 0.0),
    "left_collar": (0.06, 1.42, 0.0),
    "right_collar": (-0.06, 1.42, 0.0),
    "head": (0.0, 1.52, 0.0),
    "left_shoulder": (0.18, 1.42, 0.0),
    "right_shoulder": (-0.18, 1.42, 0.0),
    "left_elbow": (0.45, 1.42, 0.0),
    "right_elbow": (-0.45, 1.42, 0.0),
    "left_wrist": (0.70, 1.42, 0.0),
    "right_wrist": (-0.70, 1.42, 0.0),
    "left_hand": (0.76, 1.42, 0.0),
    "right_hand": (-0.76, 1.42, 0.0),
}

PART_NAMES = [
    "head", "neck", "torso", "pelvis",
    "left_upper_arm", "left_forearm", "left_hand",
    "right_upper_arm", "right_forearm", "right_hand",
    "left_thigh", "left_shin", "left_foot",
    "right_thigh", "right_shin", "right_foot",
]
PART_INDEX = {n: i for i, n in enumerate(PART_NAMES)}

# upper body with full arms; head, hands and everything below the navel go
RETAINED_PARTS = ("torso", "neck",
                  "left_upper_arm", "left_forearm",
                  "right_upper_arm", "right_forearm")

# segment table: (part, joint, start point, end point, radius at start,
# radius at end, rings around, spans along)  — radii are (u, w) half-axes of
# the elliptical cross-section
_SEGMENTS = [
    ("pelvis", "pelvis", (0.0, 0.88, 0.0), (0.0, 1.02, 0.0), (0.16, 0.11), (0.16, 0.10), 14, 3),
    ("torso", "spine1", (0.0, 1.02, 0.0), (0.0, 1.45, 0.0), (0.155, 0.10), (0.19, 0.11), 16, 8),
    ("neck", "neck", (0.0, 1.45, 0.0), (0.0, 1.52, 0.0), (0.055, 0.055), (0.05, 0.05), 10, 2),
    ("head", "head", (0.0, 1.52, 0.0), (0.0, 1.70, 0.0), (0.07, 0.08), (0.06, 0.07), 12, 4),
    ("left_upper_arm", "left_shoulder", (0.18, 1.42, 0.0), (0.45, 1.42, 0.0), (0.055, 0.055), (0.042, 0.042), 10, 4),
    ("left_forearm", "left_elbow", (0.45, 1.42, 0.0), (0.70, 1.42, 0.0), (0.042, 0.042), (0.030, 0.030), 10, 4),
    ("left_hand", "left_wrist", (0.70, 1.42, 0.0), (0.80, 1.42, 0.0), (0.032, 0.022), (0.025, 0.015), 8, 2),
    ("right_upper_arm", "right_shoulder", (-0.18, 1.42, 0.0), (-0.45, 1.42, 0.0), (0.055, 0.055), (0.042, 0.042), 10, 4),
    ("right_forearm", "right_elbow", (-0.45, 1.42, 0.0), (-0.70, 1.42, 0.0), (0.042, 0.042), (0.030, 0.030), 10, 4),
    ("right_hand", "right_wrist", (-0.70, 1.42, 0.0), (-0.80, 1.42, 0.0), (0.032, 0.022), (0.025, 0.015), 8, 2),
    ("left_thigh", "left_hip", (0.09, 0.88, 0.0), (0.09, 0.50, 0.0), (0.085, 0.085), (0.06, 0.06), 10, 4),
    ("left_shin", "left_knee", (0.09, 0.50, 0.0), (0.09, 0.08, 0.0), (0.06, 0.06), (0.04, 0.04), 10, 4),
    ("left_foot", "left_ankle", (0.09, 0.05, -0.03), (0.09, 0.03, 0.14), (0.04, 0.035), (0.035, 0.02), 8, 2),
    ("right_thigh", "right_hip", (-0.09, 0.88, 0.0), (-0.09, 0.50, 0.0), (0.085, 0.085), (0.06, 0.06), 10, 4),
    ("right_shin", "right_knee", (-0.09, 0.50, 0.0), (-0.09, 0.08, 0.0), (0.06, 0.06), (0.04, 0.04), 10, 4),
    ("right_foot", "right_ankle", (-0.09, 0.05, -0.03), (-0.09, 0.03, 0.14), (0.04, 0.035), (0.035, 0.02), 8, 2),
]

BODY_HEIGHT = 1.70  # rest template, floor to head top
_UV_REFERENCE_LENGTH = 0.5  # world units per texture tile

PART_LABEL_TABLE_VERSION = 1
_PART_LABEL_FILE = "body_part_labels.json"


@dataclass
class BodyMesh:
    """Triangle mesh with per-vertex texture coordinates and part labels."""

    vertices: np.ndarray  # (N, 3) float64
    faces: np.ndarray  # (F, 3) int64
    uv: np.ndarray  # (N, 2) float64
    part_ids: np.ndarray  # (N,) int16 indices into PART_NAMES
    joint_ids: np.ndarray  # (N,) int16 rigid skinning attachment


def _segment_frame(p0: np.ndarray, p1: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    axis = p1 - p0
    length = np.linalg.norm(axis)
    d = axis / length
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(ref, d)
    u /= np.linalg.norm(u)
    w = np.cross(d, u)
    return d, u, w


def _build_tube(part: str, joint: str, p0, p1, r0, r1, rings: int, spans: int,
                base_index: int):
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    _, u_dir, w_dir = _segment_frame(p0, p1)
    length = float(np.linalg.norm(p1 - p0))

    verts, uvs, faces = [], [], []
    phis = np.linspace(0.0, 2.0 * np.pi, rings, endpoint=False)
    for si in range(spans + 1):
        t = si / spans
        center = p0 + (p1 - p0) * t
        ru = r0[0] + (r1[0] - r0[0]) * t
        rw = r0[1] + (r1[1] - r0[1]) * t
        for phi in phis:
            verts.append(center + ru * np.cos(phi) * u_dir + rw * np.sin(phi) * w_dir)
            uvs.append((phi / (2.0 * np.pi), t * length / _UV_REFERENCE_LENGTH))
    for si in range(spans):
        for ri in range(rings):
            a = base_index + si * rings + ri
            b = base_index + si * rings + (ri + 1) % rings
            c = a + rings
            d = b + rings
            faces.append((a, b, c))
            faces.append((b, d, c))
    # cap both ends with a fan around the axis point
    n_tube = len(verts)
    for endpoint, ring_start, flip in ((p0, 0, True), (p1, spans * rings, False)):
        center_idx = base_index + len(verts)
        verts.append(endpoint)
        uvs.append((0.0, 0.0))
        for ri in range(rings):
            a = base_index + ring_start + ri
            b = base_index + ring_start + (ri + 1) % rings
            faces.append((a, center_idx, b) if flip else (a, b, center_idx))

    part_id = PART_INDEX[part]
    joint_id = JOINT_INDEX[joint]
    n = len(verts)
    return (np.array(verts), np.array(uvs), np.array(faces, dtype=np.int64),
            np.full(n, part_id, dtype=np.int16), np.full(n, joint_id, dtype=np.int16))


def build_template(betas: np.ndarray | None = None) -> BodyMesh:
    """Construct the rest-pose template. Shape parameters scale the body
    (beta[0]: overall size, beta[1]: girth); topology never changes."""
    if betas is None:
        betas = np.zeros(NUM_SHAPE_PARAMS)
    betas = np.asarray(betas, dtype=np.float64)
    if betas.shape != (NUM_SHAPE_PARAMS,):
        raise InputError(f"shape parameters must have length {NUM_SHAPE_PARAMS}")
    if not np.all(np.isfinite(betas)):
        raise InputError("shape parameters must be finite")
    size = 1.0 + 0.05 * betas[0]
    girth = 1.0 + 0.05 * betas[1]
    if size <= 0.1:
        raise InputError("degenerate shape: overall scale collapsed")

    all_v, all_uv, all_f, all_p, all_j = [], [], [], [], []
    base = 0
    for part, joint, p0, p1, r0, r1, rings, spans in _SEGMENTS:
        r0s = (r0[0] * girth * size, r0[1] * girth * size)
        r1s = (r1[0] * girth * size, r1[1] * girth * size)
        v, uv, f, p, j = _build_tube(part, joint, np.asarray(p0) * size, np.asarray(p1) * size,
                                     r0s, r1s, rings, spans, base)
        all_v.append(v)
        all_uv.append(uv)
        all_f.append(f)
        all_p.append(p)
        all_j.append(j)
        base += len(v)
    return BodyMesh(np.concatenate(all_v), np.concatenate(all_f), np.concatenate(all_uv),
                    np.concatenate(all_p), np.concatenate(all_j))


def rest_joints(betas: np.ndarray | None = None) -> np.ndarray:
    size = 1.0 + 0.05 * (0.0 if betas is None else float(np.asarray(betas)[0]))
    return np.array([_J[name] for name in JOINT_NAMES], dtype=np.float64) * size


def pose_joints(pose_params: np.ndarray, betas: np.ndarray | None = None
                ) -> tuple[np.ndarray, np.ndarray]:
    """Forward kinematics: world rotation and translation per joint."""
    theta = np.asarray(pose_params, dtype=np.float64)
    if theta.shape != (NUM_POSE_PARAMS,):
        raise InputError(f"pose parameters must have length {NUM_POSE_PARAMS}")
    if not np.all(np.isfinite(theta)):
        raise InputError("pose parameters must be finite")
    rest = rest_joints(betas)
    local = Rotation.from_rotvec(theta.reshape(24, 3)).as_matrix()
    rot = np.zeros((24, 3, 3))
    pos = np.zeros((24, 3))
    rot[0] = local[0]
    pos[0] = rest[0]
    for j in range(1, 24):
        p = JOINT_PARENTS[j]
        rot[j] = rot[p] @ local[j]
        pos[j] = pos[p] + rot[p] @ (rest[j] - rest[p])
    return rot, pos


def pose_mesh(template: BodyMesh, pose_params: np.ndarray,
              betas: np.ndarray | None = None) -> np.ndarray:
    """Rigid linear blend skinning: each vertex follows its attachment joint."""
    rot, pos = pose_joints(pose_params, betas)
    rest = rest_joints(betas)
    out = np.empty_like(template.vertices)
    for j in np.unique(template.joint_ids):
        sel = template.joint_ids == j
        out[sel] = (template.vertices[sel] - rest[j]) @ rot[j].T + pos[j]
    return out


def part_label_checksum(labels: list[str]) -> str:
    return hashlib.sha256("\n".join(labels).encode("utf-8")).hexdigest()


def _data_path() -> Path:
    return Path(str(resources.files("tryon").joinpath("data", _PART_LABEL_FILE)))


def write_part_label_table(path: Path | None = None) -> Path:
    """Regenerate the versioned vertex->part table from the procedural
    template."""
    template = build_template()
    labels = [PART_NAMES[p] for p in template.part_ids]
    payload = {
        "version": PART_LABEL_TABLE_VERSION,
        "vertex_count": len(labels),
        "checksum": part_label_checksum(labels),
        "labels": labels,
    }
    path = path or _data_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1))
    return path


def load_part_label_table() -> dict:
    """Load the bundled vertex->part table, verifying its checksum."""
    raw = json.loads(_data_path().read_text())
    if raw.get("version") != PART_LABEL_TABLE_VERSION:
        raise InputError(f"part label table version {raw.get('version')} unsupported")
    if part_label_checksum(raw["labels"]) != raw["checksum"]:
        raise InputError("part label table checksum mismatch")
    return raw
