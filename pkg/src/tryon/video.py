"""Frame sources and sinks: video files, PNG directories, synthetic footage,
and cameras, all yielding (frame_id, image) with images as float (3, H, W)."""

from __future__ import annotations

from pathlib import Path
from typing import Iterator, Optional

import cv2
import numpy as np

from .errors import InputError
from .imaging import Image, from_uint8, load_image, save_image, to_uint8
from .synthetic import synthetic_frame


def _bgr_to_image(frame: np.ndarray) -> Image:
    rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
    return from_uint8(np.moveaxis(rgb, 2, 0))


def _image_to_bgr(img: Image) -> np.ndarray:
    return cv2.cvtColor(np.moveaxis(to_uint8(img), 0, 2), cv2.COLOR_RGB2BGR)


class VideoFileSource:
    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            raise InputError(f"video not found: {self.path}")
        cap = cv2.VideoCapture(str(self.path))
        if not cap.isOpened():
            raise InputError(f"cannot decode video: {self.path}")
        self.fps = cap.get(cv2.CAP_PROP_FPS) or 30.0
        cap.release()

    def __iter__(self) -> Iterator[tuple[int, Image]]:
        cap = cv2.VideoCapture(str(self.path))
        try:
            idx = 0
            while True:
                ok, frame = cap.read()
                if not ok:
                    break
                yield idx, _bgr_to_image(frame)
                idx += 1
        finally:
            cap.release()


class ImageDirSource:
    """Directory of PNG frames, ordered by filename."""

    def __init__(self, path, fps: float = 30.0):
        self.path = Path(path)
        self.fps = fps
        self.files = sorted(self.path.glob("*.png"))
        if not self.files:
            raise InputError(f"no PNG frames in {self.path}")

    def __iter__(self) -> Iterator[tuple[int, Image]]:
        for idx, f in enumerate(self.files):
            yield idx, load_image(f, channels=3)


class SyntheticVideoSource:
    """Deterministic block-figure footage; useful everywhere a camera is not."""

    def __init__(self, n_frames: int = 30, height: int = 240, width: int = 320,
                 seed: int = 0, fps: float = 30.0):
        if n_frames <= 0:
            raise InputError("synthetic source needs at least one frame")
        self.n_frames = n_frames
        self.height = height
        self.width = width
        self.seed = seed
        self.fps = fps

    def __iter__(self) -> Iterator[tuple[int, Image]]:
        for idx in range(self.n_frames):
            yield idx, synthetic_frame(idx, self.n_frames, self.height, self.width, self.seed)


class CameraSource:
    def __init__(self, index: int = 0, fps: float = 30.0):
        self.index = index
        self.fps = fps

    def __iter__(self) -> Iterator[tuple[int, Image]]:
        cap = cv2.VideoCapture(self.index)
        if not cap.isOpened():
            raise InputError(f"cannot open camera {self.index}")
        try:
            idx = 0
            while True:
                ok, frame = cap.read()
                if not ok:
                    break
                yield idx, _bgr_to_image(frame)
                idx += 1
        finally:
            cap.release()


def open_source(spec: str):
    """Open a frame source from a path or spec string.

    Accepts a video file path, a directory of PNGs, ``camera:<index>``, or
    ``synthetic:<frames>x<height>x<width>[:seed<k>]``.
    """
    spec = str(spec)
    if spec.startswith("synthetic:"):
        body_part = spec.split(":", 1)[1]
        seed = 0
        if ":seed" in body_part:
            body_part, seed_part = body_part.split(":seed")
            seed = int(seed_part)
        dims = [int(x) for x in body_part.split("x")]
        if len(dims) != 3:
            raise InputError("synthetic spec must be synthetic:<frames>x<height>x<width>")
        return SyntheticVideoSource(dims[0], dims[1], dims[2], seed=seed)
    if spec.startswith("camera:"):
        return CameraSource(int(spec.split(":", 1)[1]))
    p = Path(spec)
    if p.is_dir():
        return ImageDirSource(p)
    return VideoFileSource(p)


class VideoFileSink:
    def __init__(self, path, fps: float = 30.0):
        self.path = Path(path)
        self.fps = fps
        self._writer: Optional[cv2.VideoWriter] = None

    def write(self, img: Image) -> None:
        h, w = img.shape[1:]
        if self._writer is None:
            fourcc = cv2.VideoWriter_fourcc(*"mp4v")
            self._writer = cv2.VideoWriter(str(self.path), fourcc, self.fps, (w, h))
            if not self._writer.isOpened():
                raise InputError(f"cannot open video writer for {self.path}")
        self._writer.write(_image_to_bgr(img))

    def close(self) -> None:
        if self._writer is not None:
            self._writer.release()
            self._writer = None


class ImageDirSink:
    def __init__(self, path, fps: float = 30.0):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.fps = fps
        self._idx = 0

    def write(self, img: Image) -> None:
        save_image(self.path / f"{self._idx:06d}.png", img)
        self._idx += 1

    def close(self) -> None:
        pass


def open_sink(spec: str, fps: float = 30.0):
    p = Path(str(spec))
    if p.suffix.lower() in (".mp4", ".avi", ".mkv", ".mov"):
        return VideoFileSink(p, fps)
    return ImageDirSink(p, fps)
