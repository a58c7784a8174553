"""Virtual measurement garment: trim the posed body mesh to the upper body
with full arms, texture it with a grid pattern, and render it with a
weak-perspective camera.

The render is a pose annotation, not a photorealistic body: flat shading,
no lighting, black background. Determinism is a contract: identical
(mesh, texture, camera) produce bit-identical images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import body
from .errors import InputError
from .imaging import Image

TEXELS_PER_UV_UNIT = 256


@dataclass(frozen=True)
class GridTexture:
    """Procedural grid: dark lines over a light fill, sized in texels."""

    cell_size: int = 32
    line_width: int = 3
    line_color: tuple[float, float, float] = (0.12, 0.12, 0.12)
    fill_color: tuple[float, float, float] = (0.85, 0.85, 0.85)

    def __post_init__(self):
        if not (self.cell_size > self.line_width >= 1):
            raise InputError("grid texture needs cell_size > line_width >= 1")


@dataclass(frozen=True)
class WeakPerspectiveCamera:
    """Maps body units to pixels: px = scale*x + tx, py = -scale*y + ty.

    The camera looks along -z from z = z_camera; geometry at or beyond the
    camera plane is clipped.
    """

    scale: float
    tx: float
    ty: float
    z_camera: float = 10.0

    def __post_init__(self):
        if self.scale <= 0:
            raise InputError("camera scale must be positive")

    def translated(self, dx: float, dy: float) -> "WeakPerspectiveCamera":
        return WeakPerspectiveCamera(self.scale, self.tx + dx, self.ty + dy, self.z_camera)


@dataclass
class TrimmedBodyMesh:
    """Posed triangle mesh restricted to the retained body parts."""

    vertices: np.ndarray  # (N, 3)
    faces: np.ndarray  # (F, 3)
    uv: np.ndarray  # (N, 2)


_template_cache: dict = {}


def _cached_template(shape_key: tuple, shape_params, retained_parts: tuple[str, ...]):
    key = (shape_key, retained_parts)
    if key not in _template_cache:
        template = body.build_template(shape_params)
        retained_ids = np.array([body.PART_INDEX[p] for p in retained_parts], dtype=np.int16)
        vmask = np.isin(template.part_ids, retained_ids)
        fmask = vmask[template.faces].all(axis=1)
        remap = np.cumsum(vmask) - 1
        faces = remap[template.faces[fmask]]
        if len(_template_cache) > 64:
            _template_cache.clear()
        _template_cache[key] = (template, vmask, faces, template.uv[vmask])
    return _template_cache[key]


def trim_body_mesh(pose_params: np.ndarray, shape_params: np.ndarray | None = None,
                   retained_parts: tuple[str, ...] = body.RETAINED_PARTS) -> TrimmedBodyMesh:
    """Pose the template and keep only torso, neck base and full arms.

    The trim is topology-only: the retained face index set depends on the
    part-label table, never on pose or shape values. Template construction and
    the trim masks are cached per shape since posing is the per-frame work.
    """
    if shape_params is None:
        shape_key: tuple = ()
    else:
        shape_params = np.asarray(shape_params, dtype=np.float64)
        if shape_params.shape != (body.NUM_SHAPE_PARAMS,):
            raise InputError("shape parameters must have length 10")
        if not np.all(np.isfinite(shape_params)):
            raise InputError("shape parameters must be finite")
        shape_key = tuple(shape_params.tolist())
    template, vmask, faces, uv = _cached_template(shape_key, shape_params, retained_parts)
    posed = body.pose_mesh(template, pose_params, shape_params)
    return TrimmedBodyMesh(vertices=posed[vmask], faces=faces, uv=uv)


def project_vertices(vertices: np.ndarray, camera: WeakPerspectiveCamera
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weak-perspective projection to pixel coordinates plus view depth."""
    px = camera.scale * vertices[:, 0] + camera.tx
    py = -camera.scale * vertices[:, 1] + camera.ty
    return px, py, vertices[:, 2].copy()


def _grid_colors(u: np.ndarray, v: np.ndarray, texture: GridTexture) -> np.ndarray:
    tu = np.floor(u * TEXELS_PER_UV_UNIT).astype(np.int64) % texture.cell_size
    tv = np.floor(v * TEXELS_PER_UV_UNIT).astype(np.int64) % texture.cell_size
    on_line = (tu < texture.line_width) | (tv < texture.line_width)
    line = np.asarray(texture.line_color, dtype=np.float32)
    fill = np.asarray(texture.fill_color, dtype=np.float32)
    return np.where(on_line[:, None], line[None], fill[None])


def render_measurement_garment(mesh: TrimmedBodyMesh, texture: GridTexture,
                               camera: WeakPerspectiveCamera,
                               out_h: int, out_w: int) -> Image:
    """Z-buffered flat rasterization of the grid-textured mesh; background is
    exactly zero. An empty mesh renders all black (valid degenerate output)."""
    img = np.zeros((3, out_h, out_w), dtype=np.float32)
    if len(mesh.faces) == 0:
        return img
    px, py, depth = project_vertices(mesh.vertices, camera)
    zbuf = np.full((out_h, out_w), -np.inf, dtype=np.float64)

    f = mesh.faces
    tx = px[f]  # (F, 3)
    ty = py[f]
    tz = depth[f]
    tu = mesh.uv[:, 0][f]
    tv = mesh.uv[:, 1][f]
    visible = tz.min(axis=1) < camera.z_camera
    x_min = np.clip(np.floor(tx.min(axis=1) - 0.5).astype(np.int64), 0, out_w - 1)
    x_max = np.clip(np.ceil(tx.max(axis=1) + 0.5).astype(np.int64), 0, out_w)
    y_min = np.clip(np.floor(ty.min(axis=1) - 0.5).astype(np.int64), 0, out_h - 1)
    y_max = np.clip(np.ceil(ty.max(axis=1) + 0.5).astype(np.int64), 0, out_h)
    on_canvas = (tx.max(axis=1) >= 0) & (tx.min(axis=1) < out_w) & \
                (ty.max(axis=1) >= 0) & (ty.min(axis=1) < out_h)

    for i in np.nonzero(visible & on_canvas)[0]:
        x0, x1, x2 = tx[i]
        y0, y1, y2 = ty[i]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < 1e-12:
            continue
        gx = np.arange(x_min[i], x_max[i], dtype=np.float64) + 0.5
        gy = np.arange(y_min[i], y_max[i], dtype=np.float64) + 0.5
        if gx.size == 0 or gy.size == 0:
            continue
        gxx, gyy = np.meshgrid(gx, gy)
        b0 = ((x2 - x1) * (gyy - y1) - (y2 - y1) * (gxx - x1)) / area
        b1 = ((x0 - x2) * (gyy - y2) - (y0 - y2) * (gxx - x2)) / area
        b2 = 1.0 - b0 - b1
        inside = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
        if not inside.any():
            continue
        zi = b0 * tz[i, 0] + b1 * tz[i, 1] + b2 * tz[i, 2]
        patch = zbuf[y_min[i]:y_max[i], x_min[i]:x_max[i]]
        update = inside & (zi > patch) & (zi < camera.z_camera)
        if not update.any():
            continue
        patch[update] = zi[update]
        ui = b0 * tu[i, 0] + b1 * tu[i, 1] + b2 * tu[i, 2]
        vi = b0 * tv[i, 0] + b1 * tv[i, 1] + b2 * tv[i, 2]
        colors = _grid_colors(ui[update], vi[update], texture)
        ys, xs = np.nonzero(update)
        img[:, ys + y_min[i], xs + x_min[i]] = colors.T
    return img


def silhouette(vm_image: Image, threshold: float = 0.0) -> np.ndarray:
    """Foreground support of a rendered measurement image."""
    return (vm_image.max(axis=0) > threshold).astype(np.float32)
