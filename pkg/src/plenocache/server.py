"""Frame-streaming render service.

Control plane: JSON text messages over a persistent WebSocket.

    {"type": "render", "id": 7, "camera_to_world": [16 floats, row-major],
     "fov": 0.7, "width": 256, "height": 256, "tier": "full" | "preview"}

Data plane: one binary frame per answered request, a 24-byte header
(little-endian: magic "PLNF", id u32, width u32, height u32, render time in
microseconds u32, flags u32 with bit 0 marking preview tier) followed by
RGBA8 row-major pixels, top-left origin. Preview renders at half
resolution; the header carries the payload's own dimensions.

Requests are coalesced latest-wins: one render in flight plus at most one
pending per connection. A superseded pending request is answered with
    {"type": "dropped", "id": old, "superseded_by": new}
Malformed or out-of-range requests get {"type": "error", ...} and the
connection stays open.
"""

from __future__ import annotations

import asyncio
import json
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .camera import Camera
from .renderer import RenderConfig, render

FRAME_MAGIC = b"PLNF"
FRAME_HEADER = struct.Struct("<4sIIIII")
FLAG_PREVIEW = 1
DIM_MIN, DIM_MAX = 16, 2048


@dataclass(frozen=True)
class RenderRequest:
    id: int
    camera_to_world: np.ndarray
    fov: float
    width: int
    height: int
    tier: str = "full"

    @staticmethod
    def from_message(msg: dict) -> "RenderRequest":
        for key in ("id", "camera_to_world", "fov", "width", "height"):
            if key not in msg:
                raise ValueError(f"missing field '{key}'")
        rid = msg["id"]
        if not isinstance(rid, int) or not 0 <= rid < 2**32:
            raise ValueError(f"id must be a u32, got {rid!r}")
        m = np.asarray(msg["camera_to_world"], dtype=np.float64)
        if m.shape != (16,):
            raise ValueError(f"camera_to_world must hold 16 numbers, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("camera_to_world contains non-finite entries")
        w, h = msg["width"], msg["height"]
        for name, v in (("width", w), ("height", h)):
            if not isinstance(v, int) or not DIM_MIN <= v <= DIM_MAX:
                raise ValueError(f"{name} must be an integer in [{DIM_MIN}, {DIM_MAX}], got {v!r}")
        tier = msg.get("tier", "full")
        if tier not in ("full", "preview"):
            raise ValueError(f"tier must be 'full' or 'preview', got {tier!r}")
        fov = float(msg["fov"])
        if not 0.0 < fov < np.pi:
            raise ValueError(f"fov must lie in (0, pi), got {fov}")
        return RenderRequest(rid, m.reshape(4, 4), fov, w, h, tier)


def encode_frame(request_id: int, width: int, height: int, micros: int, flags: int, payload: bytes) -> bytes:
    return FRAME_HEADER.pack(FRAME_MAGIC, request_id, width, height, micros, flags) + payload


def decode_frame_header(data: bytes):
    """(id, width, height, micros, flags); raises on bad magic/length."""
    if len(data) < FRAME_HEADER.size:
        raise ValueError(f"frame shorter than header: {len(data)} bytes")
    magic, rid, w, h, micros, flags = FRAME_HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise ValueError(f"bad frame magic {magic!r}")
    if len(data) != FRAME_HEADER.size + 4 * w * h:
        raise ValueError(f"payload length {len(data) - FRAME_HEADER.size} != 4*{w}*{h}")
    return rid, w, h, micros, flags


class RenderService:
    """Shared render state: caches, gate, config, one worker pool."""

    def __init__(self, pos_source, dir_source, gate=None, cfg: RenderConfig | None = None):
        self.pos_source = pos_source
        self.dir_source = dir_source
        self.gate = gate
        self.cfg = cfg or RenderConfig()
        self.pool = ThreadPoolExecutor(max_workers=1)

    def render_frame(self, req: RenderRequest) -> bytes:
        preview = req.tier == "preview"
        w = max(1, req.width // 2) if preview else req.width
        h = max(1, req.height // 2) if preview else req.height
        camera = Camera(req.camera_to_world, req.fov, w, h)
        start = time.perf_counter()
        fb = render(camera, self.pos_source, self.dir_source, self.gate, self.cfg)
        micros = int(round((time.perf_counter() - start) * 1e6))
        flags = FLAG_PREVIEW if preview else 0
        return encode_frame(req.id, w, h, micros, flags, fb.rgba8().tobytes())


class Session:
    """Per-connection latest-wins coalescing: one rendering + one pending."""

    def __init__(self, ws: WebSocket, service: RenderService):
        self.ws = ws
        self.service = service
        self.pending: RenderRequest | None = None
        self.rendering = False
        self.send_lock = asyncio.Lock()

    async def send_json(self, obj: dict):
        async with self.send_lock:
            await self.ws.send_text(json.dumps(obj))

    async def send_error(self, reason: str, request_id=None):
        msg = {"type": "error", "reason": reason}
        if request_id is not None:
            msg["id"] = request_id
        await self.send_json(msg)

    async def handle_text(self, raw: str):
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError as e:
            await self.send_error(f"malformed JSON: {e.msg}")
            return
        if not isinstance(msg, dict) or msg.get("type") != "render":
            await self.send_error(f"unknown message type {msg.get('type') if isinstance(msg, dict) else type(msg).__name__!r}")
            return
        try:
            req = RenderRequest.from_message(msg)
        except ValueError as e:
            await self.send_error(str(e), msg.get("id"))
            return
        if self.rendering:
            if self.pending is not None:
                await self.send_json(
                    {"type": "dropped", "id": self.pending.id, "superseded_by": req.id}
                )
            self.pending = req
        else:
            self.rendering = True
            asyncio.ensure_future(self._render_loop(req))

    async def _render_loop(self, req: RenderRequest):
        loop = asyncio.get_running_loop()
        try:
            while True:
                frame = await loop.run_in_executor(
                    self.service.pool, self.service.render_frame, req
                )
                async with self.send_lock:
                    await self.ws.send_bytes(frame)
                if self.pending is not None:
                    req, self.pending = self.pending, None
                else:
                    self.rendering = False
                    return
        except Exception:
            self.rendering = False
            # Connection teardown mid-render; the reader loop reports it.


def make_app(service: RenderService, assets_dir: str | None = None) -> FastAPI:
    app = FastAPI()

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session = Session(ws, service)
        try:
            while True:
                message = await ws.receive()
                if message["type"] == "websocket.disconnect":
                    break
                if message.get("text") is not None:
                    await session.handle_text(message["text"])
                elif message.get("bytes") is not None:
                    await session.send_error("binary messages are not valid requests")
        except WebSocketDisconnect:
            pass

    if assets_dir is not None:
        app.mount("/", StaticFiles(directory=assets_dir, html=True), name="assets")
    return app


def serve(service: RenderService, host: str = "127.0.0.1", port: int = 8765, assets_dir: str | None = None):
    """Blocking entry point used by the CLI."""
    import uvicorn

    app = make_app(service, assets_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
