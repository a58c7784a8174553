import json

import numpy as np
import pytest

from tryon import imaging
from tryon.dataset import (
    CaptureProtocol,
    DatasetBuildConfig,
    PoseDescriptor,
    build_dataset,
    capture_session_guide,
    default_capture_protocol,
    guide_to_json,
    load_manifest,
    validate_dataset,
)
from tryon.errors import EmptyDatasetError, InputError
from tryon.perception import FailingBackendWrapper, PerceptionSet
from tryon.video import SyntheticVideoSource


def build(tmp_path, name="ds", n_frames=10, fail_on=None, seed=7):
    backends = PerceptionSet.stubs(seed=seed)
    if fail_on:
        backends.densepose = FailingBackendWrapper(backends.densepose, fail_on=fail_on)
    source = SyntheticVideoSource(n_frames, 160, 200, seed=0)
    cfg = DatasetBuildConfig(garment_id="test-shirt", out_dir=str(tmp_path / name),
                             roi_side=32, working_short_side=160)
    return build_dataset(source, backends, cfg), tmp_path / name


class TestBuild:
    def test_lossless_path_one_record_per_frame(self, tmp_path):
        manifest, root = build(tmp_path, n_frames=10)
        assert len(manifest.records) == 10
        assert manifest.skipped == []
        assert manifest.garment_id == "test-shirt"

    def test_deterministic_manifest_hash(self, tmp_path):
        m1, _ = build(tmp_path, name="a")
        m2, _ = build(tmp_path, name="b")
        assert m1.content_hash == m2.content_hash

    def test_hash_sensitive_to_config_and_content(self, tmp_path):
        m1, _ = build(tmp_path, name="base")
        backends = PerceptionSet.stubs(seed=7)
        cfg = DatasetBuildConfig(garment_id="other-garment", out_dir=str(tmp_path / "cfg"),
                                 roi_side=32, working_short_side=160)
        m2 = build_dataset(SyntheticVideoSource(10, 160, 200, seed=0), backends, cfg)
        assert m1.content_hash != m2.content_hash
        # different capture content changes the hash too
        m3, _ = build(tmp_path, name="content", seed=8)
        assert m1.content_hash != m3.content_hash

    def test_fault_injection_skips_frames(self, tmp_path):
        manifest, _ = build(tmp_path, n_frames=10, fail_on={3, 7})
        assert len(manifest.records) == 8
        skipped_ids = sorted(s["frame_id"] for s in manifest.skipped)
        assert skipped_ids == [3, 7]
        assert all("backend failure" in s["reason"] for s in manifest.skipped)

    def test_skipped_plus_records_equals_total(self, tmp_path):
        manifest, _ = build(tmp_path, n_frames=12, fail_on={0, 5, 9})
        assert len(manifest.records) + len(manifest.skipped) == 12

    def test_blank_video_is_empty_dataset_error(self, tmp_path):
        class BlankSource:
            fps = 30.0

            def __iter__(self):
                for i in range(4):
                    yield i, np.zeros((3, 64, 64), dtype=np.float32)

        cfg = DatasetBuildConfig(out_dir=str(tmp_path / "blank"), roi_side=32)
        with pytest.raises(EmptyDatasetError):
            build_dataset(BlankSource(), PerceptionSet.stubs(), cfg)

    def test_record_images_share_roi_dimensions(self, tmp_path):
        manifest, root = build(tmp_path, n_frames=3)
        for rec in manifest.records:
            for rel in rec.image_paths():
                img = imaging.load_image(root / rel) if not rel.endswith("_mask.png") \
                    else imaging.load_mask(root / rel)[None]
                assert img.shape[1:] == (32, 32)

    def test_manifest_round_trip(self, tmp_path):
        manifest, root = build(tmp_path, n_frames=3)
        loaded = load_manifest(root)
        assert loaded.content_hash == manifest.content_hash
        assert loaded.simplification_set == manifest.simplification_set
        assert [r.frame_id for r in loaded.records] == [r.frame_id for r in manifest.records]

    def test_parallel_build_matches_sequential(self, tmp_path):
        m1, _ = build(tmp_path, name="seq")
        backends = PerceptionSet.stubs(seed=7)
        cfg = DatasetBuildConfig(garment_id="test-shirt", out_dir=str(tmp_path / "par"),
                                 roi_side=32, working_short_side=160, workers=2)
        m2 = build_dataset(SyntheticVideoSource(10, 160, 200, seed=0), backends, cfg)
        assert m1.content_hash == m2.content_hash

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(InputError):
            load_manifest(tmp_path / "nope")


class TestValidate:
    def test_fresh_dataset_passes(self, tmp_path):
        manifest, root = build(tmp_path, n_frames=4)
        report = validate_dataset(manifest, root)
        assert report.ok
        assert len(report.checks) == 4

    def test_deleted_file_fails_one_record(self, tmp_path):
        manifest, root = build(tmp_path, n_frames=4)
        (root / manifest.records[2].garment_path).unlink()
        report = validate_dataset(manifest, root)
        assert not report.ok
        assert len(report.failing) == 1
        assert report.failing[0].frame_id == manifest.records[2].frame_id
        assert "missing file" in report.failing[0].problems[0]

    def test_non_binary_mask_flagged(self, tmp_path):
        manifest, root = build(tmp_path, n_frames=3)
        rec = manifest.records[1]
        mask = imaging.load_mask(root / rec.mask_path)
        mask[mask > 0] = 0.5
        imaging.save_mask(root / rec.mask_path, mask)
        report = validate_dataset(manifest, root)
        problems = [p for c in report.failing for p in c.problems]
        assert any("not binarized" in p for p in problems)

    def test_garment_outside_mask_flagged(self, tmp_path):
        manifest, root = build(tmp_path, n_frames=3)
        rec = manifest.records[0]
        garment = imaging.load_image(root / rec.garment_path)
        mask = imaging.load_mask(root / rec.mask_path)
        garment[:, mask == 0] = 0.7
        imaging.save_image(root / rec.garment_path, garment)
        report = validate_dataset(manifest, root)
        problems = [p for c in report.failing for p in c.problems]
        assert any("outside the mask" in p for p in problems)


class TestCaptureGuide:
    def test_default_protocol_has_14_poses(self):
        protocol = default_capture_protocol()
        assert len(protocol.poses) == 14

    def test_wrong_pose_count_rejected(self):
        with pytest.raises(InputError):
            CaptureProtocol(poses=tuple(PoseDescriptor(f"p{i}", f"g{i}.png")
                                        for i in range(13)))

    def test_guide_schedule(self):
        entries = capture_session_guide()
        assert len(entries) == 14
        total = sum(e.duration_s for e in entries)
        assert 110.0 <= total <= 130.0
        # uniform split of the two-minute session
        assert entries[0].duration_s == pytest.approx(120.0 / 14)
        # contiguous, ordered schedule
        for prev, cur in zip(entries, entries[1:]):
            assert cur.start_s == pytest.approx(prev.start_s + prev.duration_s)
        assert all(e.rotation_degrees == 360.0 for e in entries)

    def test_guide_json_export(self):
        payload = json.loads(guide_to_json(capture_session_guide()))
        assert len(payload["poses"]) == 14
        assert payload["total_s"] == pytest.approx(120.0)

    def test_explicit_durations_respected(self):
        poses = [PoseDescriptor(f"p{i}", f"g{i}.png",
                                duration_s=10.0 if i == 0 else None) for i in range(14)]
        entries = capture_session_guide(CaptureProtocol(poses=tuple(poses)))
        assert entries[0].duration_s == 10.0
        assert entries[1].duration_s == pytest.approx(110.0 / 13)
