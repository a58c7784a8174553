"""Try-on inference engine: single-frame pipeline, offline video inference,
and a live streaming session with bounded inter-stage queues.

Per frame: build the person representation (measurement render + simplified
surface map), crop the upper-body square, synthesize garment and mask, undo
the crop, and alpha-blend onto the input. Pixels outside the predicted mask
are bit-identical to the input. A frame with no detected person passes
through unchanged; transient backend failures reuse the last representation
for up to five frames before passing through.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import densepose, imaging, measurement
from .errors import BackendError, ConfigError, InputError
from .imaging import BILINEAR, NEAREST, Image, RepresentationMode, build_representation
from .perception import PerceptionSet
from .synthesis import GsOutput, load_synthesizer
from .video import open_sink, open_source

log = logging.getLogger(__name__)

BACKEND_GRACE_FRAMES = 5
LIVE_QUEUE_DEPTH = 2


@dataclass
class GarmentCatalogEntry:
    garment_id: str
    checkpoint_path: str
    mode: str = "hybrid"
    preview_path: Optional[str] = None
    simplification_set: tuple[int, ...] = densepose.DEFAULT_SIMPLIFICATION_SET
    roi_pad: float = 0.15
    working_short_side: int = 1024  # representation resolution, as at training

    def to_dict(self) -> dict:
        return {
            "garment_id": self.garment_id,
            "checkpoint": self.checkpoint_path,
            "mode": self.mode,
            "preview": self.preview_path,
            "simplification_set": list(self.simplification_set),
            "roi_pad": self.roi_pad,
            "working_short_side": self.working_short_side,
        }


def write_catalog_entry(catalog_dir, entry: GarmentCatalogEntry) -> Path:
    d = Path(catalog_dir) / entry.garment_id
    d.mkdir(parents=True, exist_ok=True)
    path = d / "entry.json"
    path.write_text(json.dumps(entry.to_dict(), indent=1))
    return path


def load_catalog(catalog_dir) -> list[GarmentCatalogEntry]:
    catalog_dir = Path(catalog_dir)
    entries = []
    for entry_path in sorted(catalog_dir.glob("*/entry.json")):
        raw = json.loads(entry_path.read_text())
        checkpoint = raw["checkpoint"]
        if not Path(checkpoint).is_absolute():
            checkpoint = str(entry_path.parent / checkpoint)
        entries.append(GarmentCatalogEntry(
            garment_id=raw["garment_id"],
            checkpoint_path=checkpoint,
            mode=raw.get("mode", "hybrid"),
            preview_path=raw.get("preview"),
            simplification_set=tuple(raw.get("simplification_set",
                                             densepose.DEFAULT_SIMPLIFICATION_SET)),
            roi_pad=raw.get("roi_pad", 0.15),
            working_short_side=raw.get("working_short_side", 1024),
        ))
    if not entries:
        raise InputError(f"no catalog entries under {catalog_dir}")
    return entries


@dataclass
class StageLatency:
    pose_ms: float = 0.0
    densepose_ms: float = 0.0
    synthesis_ms: float = 0.0
    composite_ms: float = 0.0

    @property
    def total_ms(self) -> float:
        return self.pose_ms + self.densepose_ms + self.synthesis_ms + self.composite_ms

    def to_dict(self) -> dict:
        return {"pose_ms": self.pose_ms, "densepose_ms": self.densepose_ms,
                "synthesis_ms": self.synthesis_ms, "composite_ms": self.composite_ms,
                "total_ms": self.total_ms}


@dataclass
class TryOnFrameResult:
    frame_id: int
    output: Image
    latency: StageLatency
    passthrough: bool
    garment_id: Optional[str] = None
    wall_ms: float = 0.0


@dataclass
class _Representation:
    rep_images: dict
    roi: imaging.RoiTransform


class GarmentSelector:
    """Serialized garment selection; reads are atomic reference grabs."""

    def __init__(self, catalog: list[GarmentCatalogEntry]):
        if not catalog:
            raise ConfigError("catalog must contain at least one garment")
        self._by_id = {e.garment_id: e for e in catalog}
        self._lock = threading.Lock()
        self._loaded: dict[str, object] = {}
        first = catalog[0].garment_id
        self._current = (first, self._load(first))

    def _load(self, garment_id: str):
        if garment_id not in self._loaded:
            self._loaded[garment_id] = load_synthesizer(self._by_id[garment_id].checkpoint_path)
        return self._loaded[garment_id]

    @property
    def catalog(self) -> list[GarmentCatalogEntry]:
        return list(self._by_id.values())

    def select(self, garment_id: str) -> None:
        if garment_id not in self._by_id:
            raise InputError(f"unknown garment '{garment_id}'")
        with self._lock:
            self._current = (garment_id, self._load(garment_id))

    def current(self):
        """(garment_id, entry, synthesizer) as one consistent snapshot."""
        with self._lock:
            garment_id, synth = self._current
        return garment_id, self._by_id[garment_id], synth


class TryOnPipeline:
    """Frame-at-a-time try-on against a garment selector."""

    def __init__(self, backends: PerceptionSet, selector: GarmentSelector,
                 grace_frames: int = BACKEND_GRACE_FRAMES,
                 texture: Optional[measurement.GridTexture] = None):
        backends.probe()
        self.backends = backends
        self.selector = selector
        self.grace_frames = grace_frames
        self.texture = texture or measurement.GridTexture()
        self._last_rep: Optional[_Representation] = None
        self._failures = 0

    # stage 1: perception + representation ---------------------------------

    def _build_representation(self, frame: Image, entry: GarmentCatalogEntry,
                              roi_side: int, lat: StageLatency) -> Optional[_Representation]:
        h, w = frame.shape[1:]
        t0 = time.perf_counter()
        # perception runs at the dataset's working resolution so inference
        # sees the distribution the network was trained on; the crop is
        # mapped back to full-frame coordinates for compositing
        short = min(h, w)
        if short > entry.working_short_side:
            k = short / entry.working_short_side
            work = imaging.resize(frame, int(round(h / k)), int(round(w / k)), BILINEAR)
        else:
            k = 1.0
            work = frame
        wh, ww = work.shape[1:]
        pose = self.backends.pose.estimate_pose(work)
        if pose is None:
            lat.pose_ms = (time.perf_counter() - t0) * 1e3
            return None
        mesh = measurement.trim_body_mesh(pose.pose_params, pose.shape_params)
        vm = measurement.render_measurement_garment(mesh, self.texture, pose.camera, wh, ww)
        t1 = time.perf_counter()
        lat.pose_ms = (t1 - t0) * 1e3

        dp = self.backends.densepose.estimate_densepose(work)
        if dp is None:
            lat.densepose_ms = (time.perf_counter() - t1) * 1e3
            return None
        dp_img = densepose.encode_iuv(dp)
        sdp_img = densepose.simplify(dp_img, entry.simplification_set)
        roi = densepose.upper_body_roi(dp, target_side=roi_side, pad=entry.roi_pad)
        if roi is None:
            lat.densepose_ms = (time.perf_counter() - t1) * 1e3
            return None
        rep_images = {
            "vm": imaging.roi_extract(vm, roi, BILINEAR),
            "sdp": imaging.roi_extract(sdp_img, roi, NEAREST),
        }
        if RepresentationMode(entry.mode) is RepresentationMode.VMDP:
            rep_images["dp"] = imaging.roi_extract(dp_img, roi, NEAREST)
        lat.densepose_ms = (time.perf_counter() - t1) * 1e3
        full_roi = imaging.RoiTransform(center_x=roi.center_x * (w / ww),
                                        center_y=roi.center_y * (h / wh),
                                        source_side=roi.source_side * (w / ww),
                                        target_side=roi.target_side)
        return _Representation(rep_images, full_roi)

    # stage 2 + 3: synthesis and compositing --------------------------------

    @staticmethod
    def _synthesize(synth, entry: GarmentCatalogEntry, rep: _Representation,
                    lat: StageLatency) -> GsOutput:
        t0 = time.perf_counter()
        hybrid = build_representation(entry.mode, vm=rep.rep_images.get("vm"),
                                      sdp=rep.rep_images.get("sdp"),
                                      dp=rep.rep_images.get("dp"))
        out = synth.synthesize(hybrid)
        lat.synthesis_ms = (time.perf_counter() - t0) * 1e3
        return out

    @staticmethod
    def _composite(frame: Image, rep: _Representation, out: GsOutput,
                   lat: StageLatency) -> Image:
        t0 = time.perf_counter()
        h, w = frame.shape[1:]
        garment_full = imaging.roi_inverse(out.garment, rep.roi, h, w, BILINEAR)
        mask_full = imaging.roi_inverse(out.mask, rep.roi, h, w, NEAREST)
        result = imaging.composite(frame, garment_full, mask_full)
        lat.composite_ms = (time.perf_counter() - t0) * 1e3
        return result

    def process(self, frame_id: int, frame: Image) -> TryOnFrameResult:
        t_start = time.perf_counter()
        lat = StageLatency()
        garment_id, entry, synth = self.selector.current()
        try:
            rep = self._build_representation(frame, entry, synth.roi_side, lat)
            self._failures = 0
        except BackendError as exc:
            self._failures += 1
            if self._failures <= self.grace_frames and self._last_rep is not None:
                log.warning("frame %d: backend failure (%s); reusing last representation "
                            "(%d/%d)", frame_id, exc, self._failures, self.grace_frames)
                rep = self._last_rep
            else:
                log.warning("frame %d: backend failure (%s); passing through", frame_id, exc)
                rep = None
        if rep is None:
            wall = (time.perf_counter() - t_start) * 1e3
            return TryOnFrameResult(frame_id, frame.copy(), lat, passthrough=True,
                                    garment_id=garment_id, wall_ms=wall)
        self._last_rep = rep
        out = self._synthesize(synth, entry, rep, lat)
        result = self._composite(frame, rep, out, lat)
        wall = (time.perf_counter() - t_start) * 1e3
        return TryOnFrameResult(frame_id, result, lat, passthrough=False,
                                garment_id=garment_id, wall_ms=wall)


def tryon_frame(frame: Image, backends: PerceptionSet, selector: GarmentSelector,
                frame_id: int = 0) -> TryOnFrameResult:
    """One-shot convenience wrapper around :class:`TryOnPipeline`."""
    return TryOnPipeline(backends, selector).process(frame_id, frame)


class FpsTracker:
    """Sliding-window throughput and per-second reports."""

    def __init__(self, window_s: float = 1.0):
        self.window_s = window_s
        self._times: list[float] = []
        self.reports: list[dict] = []
        self._last_report = time.monotonic()
        self._count_since = 0

    def tick(self) -> None:
        now = time.monotonic()
        self._times.append(now)
        cutoff = now - self.window_s
        while self._times and self._times[0] < cutoff:
            self._times.pop(0)
        self._count_since += 1
        if now - self._last_report >= 1.0:
            self.reports.append({"t": now, "fps": self._count_since / (now - self._last_report)})
            self._last_report = now
            self._count_since = 0

    @property
    def fps(self) -> float:
        if len(self._times) < 2:
            return float(len(self._times)) / self.window_s
        span = self._times[-1] - self._times[0]
        return (len(self._times) - 1) / span if span > 0 else 0.0


@dataclass
class SessionStats:
    frames: int = 0
    dropped: int = 0
    passthrough: int = 0
    latencies: list[StageLatency] = field(default_factory=list)

    def mean_latency(self) -> dict:
        if not self.latencies:
            return {}
        return {
            "pose_ms": float(np.mean([l.pose_ms for l in self.latencies])),
            "densepose_ms": float(np.mean([l.densepose_ms for l in self.latencies])),
            "synthesis_ms": float(np.mean([l.synthesis_ms for l in self.latencies])),
            "composite_ms": float(np.mean([l.composite_ms for l in self.latencies])),
            "total_ms": float(np.mean([l.total_ms for l in self.latencies])),
        }


class _DropOldestQueue:
    """Bounded queue that evicts the oldest item instead of blocking."""

    def __init__(self, depth: int):
        self.q: queue.Queue = queue.Queue(maxsize=depth)
        self.dropped = 0

    def put(self, item) -> None:
        while True:
            try:
                self.q.put_nowait(item)
                return
            except queue.Full:
                try:
                    self.q.get_nowait()
                    self.dropped += 1
                except queue.Empty:
                    pass

    def get(self):
        return self.q.get()


_END = object()


class TryOnSession:
    """Streams try-on results from a frame source.

    Offline mode processes every frame in order (lossless). Live mode runs
    perception, synthesis and compositing as concurrent stages connected by
    depth-2 drop-oldest queues, so a slow stage sheds frames instead of
    stalling the stream.
    """

    def __init__(self, source, backends: PerceptionSet, selector: GarmentSelector,
                 live: bool = False):
        self.source = source
        self.pipeline = TryOnPipeline(backends, selector)
        self.selector = selector
        self.live = live
        self.stats = SessionStats()
        self.fps = FpsTracker()

    def run(self) -> Iterator[TryOnFrameResult]:
        if not self.live:
            yield from self._run_offline()
        else:
            yield from self._run_live()

    def _account(self, result: TryOnFrameResult) -> TryOnFrameResult:
        self.stats.frames += 1
        self.stats.passthrough += int(result.passthrough)
        self.stats.latencies.append(result.latency)
        self.fps.tick()
        return result

    def _run_offline(self) -> Iterator[TryOnFrameResult]:
        for frame_id, frame in self.source:
            yield self._account(self.pipeline.process(frame_id, frame))

    def _run_live(self) -> Iterator[TryOnFrameResult]:
        pipe = self.pipeline
        q_rep = _DropOldestQueue(LIVE_QUEUE_DEPTH)
        q_syn = _DropOldestQueue(LIVE_QUEUE_DEPTH)
        q_out: queue.Queue = queue.Queue(maxsize=LIVE_QUEUE_DEPTH * 4)

        def stage_perception():
            for frame_id, frame in self.source:
                t0 = time.perf_counter()
                lat = StageLatency()
                garment_id, entry, synth = self.selector.current()
                try:
                    rep = pipe._build_representation(frame, entry, synth.roi_side, lat)
                    pipe._failures = 0
                except BackendError:
                    pipe._failures += 1
                    rep = pipe._last_rep \
                        if pipe._failures <= pipe.grace_frames and pipe._last_rep is not None \
                        else None
                if rep is not None:
                    pipe._last_rep = rep
                q_rep.put((frame_id, frame, rep, lat, t0))
            q_rep.put(_END)

        def stage_synthesis():
            while True:
                item = q_rep.get()
                if item is _END:
                    q_syn.put(_END)
                    return
                frame_id, frame, rep, lat, t0 = item
                if rep is None:
                    q_syn.put((frame_id, frame, None, None, None, lat, t0))
                    continue
                # the synthesizer reference is grabbed exactly once per frame:
                # no frame mixes two checkpoints
                garment_id, entry, synth = self.selector.current()
                out = pipe._synthesize(synth, entry, rep, lat)
                q_syn.put((frame_id, frame, rep, out, garment_id, lat, t0))

        def stage_composite():
            while True:
                item = q_syn.get()
                if item is _END:
                    q_out.put(_END)
                    return
                frame_id, frame, rep, out, garment_id, lat, t0 = item
                if out is None:
                    result = TryOnFrameResult(frame_id, frame.copy(), lat, True,
                                              garment_id, (time.perf_counter() - t0) * 1e3)
                else:
                    composed = pipe._composite(frame, rep, out, lat)
                    result = TryOnFrameResult(frame_id, composed, lat, False,
                                              garment_id, (time.perf_counter() - t0) * 1e3)
                q_out.put(result)

        threads = [threading.Thread(target=fn, daemon=True)
                   for fn in (stage_perception, stage_synthesis, stage_composite)]
        for t in threads:
            t.start()
        last_id = -1
        while True:
            result = q_out.get()
            if result is _END:
                break
            if result.frame_id <= last_id:
                continue
            last_id = result.frame_id
            yield self._account(result)
        for t in threads:
            t.join(timeout=5.0)
        self.stats.dropped = q_rep.dropped + q_syn.dropped


def run_session(source, backends: PerceptionSet, selector: GarmentSelector,
                live: bool = False) -> TryOnSession:
    return TryOnSession(source, backends, selector, live=live)


def infer_video(input_spec, output_spec, backends: PerceptionSet,
                selector: GarmentSelector, latency_json: Optional[str] = None) -> dict:
    """Offline try-on over a recorded video: never drops frames, writes the
    output video plus a per-frame latency report, and returns a summary."""
    source = open_source(input_spec)
    sink = open_sink(output_spec, fps=getattr(source, "fps", 30.0))
    session = TryOnSession(source, backends, selector, live=False)
    per_frame = []
    t0 = time.perf_counter()
    n = 0
    try:
        for result in session.run():
            sink.write(result.output)
            per_frame.append({"frame_id": result.frame_id, "passthrough": result.passthrough,
                              "wall_ms": result.wall_ms, **result.latency.to_dict()})
            n += 1
    finally:
        sink.close()
    elapsed = time.perf_counter() - t0
    summary = {
        "frames": n,
        "elapsed_s": elapsed,
        "fps": n / elapsed if elapsed > 0 else 0.0,
        "mean_latency": session.stats.mean_latency(),
        "passthrough_frames": session.stats.passthrough,
    }
    if latency_json:
        Path(latency_json).write_text(json.dumps({"summary": summary, "frames": per_frame},
                                                 indent=1))
    return summary
