"""Local try-on service driven by the companion UI.

HTTP: ``GET /garments`` (catalog), ``POST /garments/select`` (switch),
``GET /stats`` (fps and stage latencies). Frames stream over a persistent
WebSocket at ``/stream`` as binary messages framed
``[frame_id: u64][width: u32][height: u32][PNG bytes]`` (big-endian), in both
directions: the client sends camera frames, the server returns composited
frames.
"""

from __future__ import annotations

import io
import struct
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse
from PIL import Image as PilImage
from pydantic import BaseModel

from .engine import FpsTracker, GarmentSelector, SessionStats, TryOnPipeline
from .errors import InputError
from .imaging import Image, from_uint8, to_uint8
from .perception import PerceptionSet

FRAME_HEADER = struct.Struct(">QII")


def encode_frame_message(frame_id: int, img: Image) -> bytes:
    """Binary frame message: u64 frame id, u32 width, u32 height, PNG bytes."""
    h, w = img.shape[1:]
    buf = io.BytesIO()
    PilImage.fromarray(np.moveaxis(to_uint8(img), 0, 2), mode="RGB").save(buf, format="PNG")
    return FRAME_HEADER.pack(frame_id, w, h) + buf.getvalue()


def decode_frame_message(data: bytes) -> tuple[int, Image]:
    if len(data) < FRAME_HEADER.size:
        raise InputError("frame message shorter than its header")
    frame_id, width, height = FRAME_HEADER.unpack_from(data)
    png = data[FRAME_HEADER.size:]
    arr = np.asarray(PilImage.open(io.BytesIO(png)).convert("RGB"))
    if arr.shape[0] != height or arr.shape[1] != width:
        raise InputError(f"frame header {width}x{height} disagrees with PNG "
                         f"{arr.shape[1]}x{arr.shape[0]}")
    return frame_id, from_uint8(np.moveaxis(arr, 2, 0))


class SelectRequest(BaseModel):
    garment_id: str


class ServiceState:
    def __init__(self, selector: GarmentSelector, backends: PerceptionSet):
        self.selector = selector
        self.pipeline = TryOnPipeline(backends, selector)
        self.stats = SessionStats()
        self.fps = FpsTracker()
        self.lock = threading.Lock()  # frame processing is serialized

    def process(self, frame_id: int, frame: Image):
        with self.lock:
            result = self.pipeline.process(frame_id, frame)
            self.stats.frames += 1
            self.stats.passthrough += int(result.passthrough)
            self.stats.latencies.append(result.latency)
            if len(self.stats.latencies) > 300:
                del self.stats.latencies[:100]
            self.fps.tick()
        return result


def create_app(selector: GarmentSelector, backends: Optional[PerceptionSet] = None) -> FastAPI:
    backends = backends or PerceptionSet.stubs()
    app = FastAPI(title="per-garment try-on service")
    state = ServiceState(selector, backends)
    app.state.tryon = state

    @app.get("/garments")
    def garments():
        current_id, _, _ = state.selector.current()
        return {"garments": [e.to_dict() for e in state.selector.catalog],
                "selected": current_id}

    @app.post("/garments/select")
    def select(req: SelectRequest):
        try:
            state.selector.select(req.garment_id)
        except InputError as exc:
            return JSONResponse(status_code=404, content={"error": str(exc)})
        return {"garment_id": req.garment_id}

    @app.get("/stats")
    def stats():
        return {
            "fps": state.fps.fps,
            "frames": state.stats.frames,
            "passthrough_frames": state.stats.passthrough,
            "stage_latency_ms": state.stats.mean_latency(),
        }

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                data = await ws.receive_bytes()
                try:
                    frame_id, frame = decode_frame_message(data)
                except InputError:
                    continue
                result = await run_in_threadpool(state.process, frame_id, frame)
                await ws.send_bytes(encode_frame_message(result.frame_id, result.output))
        except WebSocketDisconnect:
            pass

    return app


def serve(catalog_dir, host: str = "127.0.0.1", port: int = 8789,
          backends: Optional[PerceptionSet] = None) -> None:
    """Run the service until interrupted."""
    import uvicorn

    from .engine import load_catalog

    selector = GarmentSelector(load_catalog(catalog_dir))
    app = create_app(selector, backends)
    uvicorn.run(app, host=host, port=port, log_level="warning")
