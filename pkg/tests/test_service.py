import numpy as np
import pytest
from fastapi.testclient import TestClient

from tryon import synthetic
from tryon.engine import GarmentCatalogEntry, GarmentSelector, load_catalog, write_catalog_entry
from tryon.errors import InputError
from tryon.perception import PerceptionSet
from tryon.service import create_app, decode_frame_message, encode_frame_message
from tryon.synthesis import ConstantColorSynthesizer


@pytest.fixture()
def client(tmp_path):
    catalog_dir = tmp_path / "catalog"
    for i, color in enumerate(((0.9, 0.1, 0.1), (0.1, 0.1, 0.9))):
        gid = f"g{i}"
        d = catalog_dir / gid
        d.mkdir(parents=True)
        (d / "checkpoint.json").write_text(
            ConstantColorSynthesizer(color, mask_kind="zero", roi_side=32).to_json())
        write_catalog_entry(catalog_dir, GarmentCatalogEntry(
            garment_id=gid, checkpoint_path="checkpoint.json"))
    selector = GarmentSelector(load_catalog(catalog_dir))
    app = create_app(selector, PerceptionSet.stubs())
    return TestClient(app)


class TestFraming:
    def test_round_trip(self):
        img = np.random.default_rng(0).random((3, 24, 30)).astype(np.float32)
        img = np.round(img * 255) / 255
        data = encode_frame_message(77, img.astype(np.float32))
        frame_id, decoded = decode_frame_message(data)
        assert frame_id == 77
        np.testing.assert_allclose(decoded, img, atol=1e-7)

    def test_header_is_big_endian_u64_u32_u32(self):
        img = np.zeros((3, 4, 6), dtype=np.float32)
        data = encode_frame_message(0x0102030405060708, img)
        assert data[:8] == bytes([1, 2, 3, 4, 5, 6, 7, 8])
        assert int.from_bytes(data[8:12], "big") == 6  # width
        assert int.from_bytes(data[12:16], "big") == 4  # height
        assert data[16:24].startswith(b"\x89PNG")

    def test_truncated_message_rejected(self):
        with pytest.raises(InputError):
            decode_frame_message(b"\x00\x01")

    def test_header_png_disagreement_rejected(self):
        img = np.zeros((3, 4, 6), dtype=np.float32)
        data = bytearray(encode_frame_message(1, img))
        data[11] = 99  # corrupt the declared width
        with pytest.raises(InputError):
            decode_frame_message(bytes(data))


class TestHttp:
    def test_catalog_listing(self, client):
        payload = client.get("/garments").json()
        assert [g["garment_id"] for g in payload["garments"]] == ["g0", "g1"]
        assert payload["selected"] == "g0"

    def test_select_valid(self, client):
        response = client.post("/garments/select", json={"garment_id": "g1"})
        assert response.status_code == 200
        assert client.get("/garments").json()["selected"] == "g1"

    def test_select_unknown_is_404_and_unchanged(self, client):
        response = client.post("/garments/select", json={"garment_id": "nope"})
        assert response.status_code == 404
        assert client.get("/garments").json()["selected"] == "g0"

    def test_stats_fields(self, client):
        payload = client.get("/stats").json()
        for key in ("fps", "frames", "passthrough_frames", "stage_latency_ms"):
            assert key in payload


class TestStream:
    def test_frames_echo_composited(self, client):
        frame = synthetic.synthetic_frame(0, 10, 96, 128, seed=0)
        with client.websocket_connect("/stream") as ws:
            for frame_id in (5, 6):
                ws.send_bytes(encode_frame_message(frame_id, frame))
                out_id, out = decode_frame_message(ws.receive_bytes())
                assert out_id == frame_id
                assert out.shape == frame.shape
                # zero-mask probe: output equals input up to PNG round trip
                np.testing.assert_allclose(out, np.round(frame * 255) / 255, atol=1e-7)
        stats = client.get("/stats").json()
        assert stats["frames"] == 2

    def test_selection_visible_in_stream(self, client, tmp_path):
        # switch to a full-mask red probe mid-stream and watch the pixels change
        frame = synthetic.synthetic_frame(0, 10, 96, 128, seed=0)
        state = client.app.state.tryon
        red = ConstantColorSynthesizer((0.9, 0.1, 0.1), mask_kind="full", roi_side=32)
        state.selector._loaded["g0"] = red
        state.selector._current = ("g0", red)
        with client.websocket_connect("/stream") as ws:
            ws.send_bytes(encode_frame_message(1, frame))
            _, out = decode_frame_message(ws.receive_bytes())
            changed = np.any(out != np.round(frame * 255) / 255, axis=0)
            assert changed.any()
