"""Frame-streaming service: wire protocol, validation, latest-wins coalescing."""

import json
import struct

import pytest
from fastapi.testclient import TestClient

from plenocache.camera import orbit_to_matrix
from plenocache.renderer import RenderConfig, gate_for_cache
from plenocache.server import (
    FLAG_PREVIEW,
    FRAME_HEADER,
    FRAME_MAGIC,
    RenderService,
    decode_frame_header,
    encode_frame,
    make_app,
)

POSE = list(orbit_to_matrix(0.6, 0.25, 1.6).reshape(16))


def render_msg(rid, width=32, height=32, tier="full", **overrides):
    msg = {
        "type": "render",
        "id": rid,
        "camera_to_world": POSE,
        "fov": 0.7,
        "width": width,
        "height": height,
        "tier": tier,
    }
    msg.update(overrides)
    return msg


def recv_frame(ws):
    """Skip interleaved JSON notices and return the next binary frame."""
    while True:
        message = ws.receive()
        if message.get("bytes") is not None:
            return message["bytes"]


@pytest.fixture(scope="module")
def client(lambert_cache):
    pos, dirs = lambert_cache
    service = RenderService(pos, dirs, gate_for_cache(pos), RenderConfig())
    with TestClient(make_app(service)) as c:
        yield c


class TestHeaderCodec:
    def test_round_trip(self):
        blob = encode_frame(7, 4, 2, 123456, FLAG_PREVIEW, b"\0" * 32)
        assert decode_frame_header(blob) == (7, 4, 2, 123456, FLAG_PREVIEW)

    def test_header_layout(self):
        assert FRAME_HEADER.size == 24
        blob = encode_frame(0x01020304, 16, 16, 0, 0, b"\0" * 1024)
        assert blob[:4] == FRAME_MAGIC
        assert struct.unpack_from("<I", blob, 4)[0] == 0x01020304

    def test_bad_magic_rejected(self):
        blob = b"XXXX" + encode_frame(1, 4, 2, 0, 0, b"\0" * 32)[4:]
        with pytest.raises(ValueError, match="magic"):
            decode_frame_header(blob)

    def test_length_mismatch_rejected(self):
        blob = encode_frame(1, 4, 2, 0, 0, b"\0" * 31)
        with pytest.raises(ValueError, match="payload"):
            decode_frame_header(blob)


class TestHttp:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}


class TestRenderFlow:
    def test_full_frame_shape(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps(render_msg(5)))
            rid, w, h, micros, flags = decode_frame_header(recv_frame(ws))
        assert (rid, w, h, flags) == (5, 32, 32, 0)
        assert micros > 0

    def test_repeat_request_byte_identical(self, client):
        # Identical up to the render-time field at header bytes [16:20).
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps(render_msg(1)))
            first = recv_frame(ws)
            ws.send_text(json.dumps(render_msg(1)))
            second = recv_frame(ws)
        assert first[:16] == second[:16]
        assert first[20:] == second[20:]

    def test_preview_is_half_resolution_and_flagged(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps(render_msg(9, width=32, height=48, tier="preview")))
            blob = recv_frame(ws)
        rid, w, h, _, flags = decode_frame_header(blob)
        assert (rid, w, h) == (9, 16, 24)
        assert flags & FLAG_PREVIEW
        assert len(blob) == FRAME_HEADER.size + 4 * 16 * 24

    def test_latest_wins_drops_middle_request(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps(render_msg(10, width=64, height=64)))
            ws.send_text(json.dumps(render_msg(11)))
            ws.send_text(json.dumps(render_msg(12)))
            notices = []
            frames = []
            while len(frames) < 2:
                message = ws.receive()
                if message.get("bytes") is not None:
                    frames.append(decode_frame_header(message["bytes"]))
                else:
                    notices.append(json.loads(message["text"]))
        assert [f[0] for f in frames] == [10, 12]
        assert {"type": "dropped", "id": 11, "superseded_by": 12} in notices


class TestValidation:
    def assert_error(self, ws, substring, rid=None):
        msg = json.loads(ws.receive_text())
        assert msg["type"] == "error"
        assert substring in msg["reason"]
        if rid is not None:
            assert msg["id"] == rid
        return msg

    def test_malformed_json(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text("{not json")
            msg = self.assert_error(ws, "malformed JSON")
            assert "id" not in msg

    def test_unknown_type(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps({"type": "reboot"}))
            self.assert_error(ws, "unknown message type")

    def test_width_out_of_range_carries_id(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps(render_msg(3, width=4)))
            self.assert_error(ws, "width", rid=3)
            ws.send_text(json.dumps(render_msg(4, height=4096)))
            self.assert_error(ws, "height", rid=4)

    def test_missing_field(self, client):
        msg = render_msg(2)
        del msg["camera_to_world"]
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps(msg))
            self.assert_error(ws, "camera_to_world", rid=2)

    def test_non_finite_pose(self, client):
        bad = dict(render_msg(6), camera_to_world=[float("nan")] * 16)
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps(bad).replace("NaN", "1e999"))
            self.assert_error(ws, "non-finite", rid=6)

    def test_bad_tier(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps(render_msg(7, tier="thumbnail")))
            self.assert_error(ws, "tier", rid=7)

    def test_binary_inbound_rejected(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_bytes(b"\x00\x01\x02")
            self.assert_error(ws, "binary")

    def test_connection_survives_errors(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_text("garbage")
            self.assert_error(ws, "malformed")
            ws.send_text(json.dumps(render_msg(8)))
            rid, *_ = decode_frame_header(recv_frame(ws))
        assert rid == 8
