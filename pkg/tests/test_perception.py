import json
import os
import stat

import numpy as np
import pytest
from scipy import ndimage

from tryon import perception, synthetic
from tryon.errors import BackendError, InputError
from tryon.perception import (
    BodyPoseEstimate,
    DerivedGarmentParseBackend,
    FailingBackendWrapper,
    PerceptionSet,
    StubDensePoseBackend,
    StubParseBackend,
    StubPoseBackend,
    SubprocessPoseBackend,
    foreground_mask,
    largest_blob_bbox,
)
from tryon.measurement import WeakPerspectiveCamera


@pytest.fixture(scope="module")
def frame():
    return synthetic.synthetic_frame(0, 30, 160, 200, seed=0)


BLANK = np.zeros((3, 120, 160), dtype=np.float32)


class TestStubPose:
    def test_blank_frame_absent(self):
        assert StubPoseBackend(seed=7).estimate_pose(BLANK) is None

    def test_seeded_canonical_parameters(self):
        a = StubPoseBackend(seed=7)
        b = StubPoseBackend(seed=7)
        ta, ba = a.canonical_parameters()
        tb, bb = b.canonical_parameters()
        np.testing.assert_array_equal(ta, tb)
        np.testing.assert_array_equal(ba, bb)
        tc, _ = StubPoseBackend(seed=8).canonical_parameters()
        assert not np.array_equal(ta, tc)

    def test_pure_function_of_frame(self, frame):
        backend = StubPoseBackend(seed=7)
        e1 = backend.estimate_pose(frame)
        e2 = backend.estimate_pose(frame)
        np.testing.assert_array_equal(e1.pose_params, e2.pose_params)
        assert e1.camera == e2.camera

    def test_two_persons_selects_larger_bbox(self):
        img = synthetic.two_person_frame(200, 260)
        est = StubPoseBackend(seed=0).estimate_pose(img)
        # oracle: blob bboxes by connected components, pick larger area
        fg = foreground_mask(img)
        labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=int))
        assert n >= 2
        best = None
        best_area = -1
        for sl in ndimage.find_objects(labels):
            area = (sl[0].stop - sl[0].start) * (sl[1].stop - sl[1].start)
            if area > best_area:
                best_area, best = area, sl
        cx = (best[1].start + best[1].stop) / 2.0
        assert est.camera.tx == pytest.approx(cx, abs=1.0)

    def test_camera_maps_body_onto_blob(self, frame):
        est = StubPoseBackend(seed=7).estimate_pose(frame)
        top, left, bottom, right = largest_blob_bbox(frame)
        # feet (y=0) project to the blob bottom edge
        assert est.camera.ty == pytest.approx(bottom + 1)
        assert est.camera.scale > 0


class TestStubDensePose:
    def test_blank_frame_absent(self):
        assert StubDensePoseBackend().estimate_densepose(BLANK) is None

    def test_parts_nonzero_exactly_on_silhouette(self, frame):
        dp = StubDensePoseBackend().estimate_densepose(frame)
        fg = foreground_mask(frame)
        np.testing.assert_array_equal(dp.part_index > 0, fg)

    def test_uv_zero_on_background(self, frame):
        dp = StubDensePoseBackend().estimate_densepose(frame)
        bg = dp.part_index == 0
        assert np.all(dp.u[bg] == 0) and np.all(dp.v[bg] == 0)

    def test_deterministic(self, frame):
        a = StubDensePoseBackend().estimate_densepose(frame)
        b = StubDensePoseBackend().estimate_densepose(frame)
        np.testing.assert_array_equal(a.part_index, b.part_index)
        np.testing.assert_array_equal(a.u, b.u)

    def test_upper_parts_above_leg_parts(self, frame):
        dp = StubDensePoseBackend().estimate_densepose(frame)
        torso_rows = np.nonzero(np.isin(dp.part_index, (1, 2)))[0]
        leg_rows = np.nonzero(np.isin(dp.part_index, (7, 8, 11, 12)))[0]
        assert torso_rows.max() <= leg_rows.min()


class TestStubParse:
    def test_mask_is_the_torso_rectangle(self, frame):
        result = StubParseBackend().parse_garment(frame)
        # oracle: rectangle from the shared chart constants, clipped to the
        # foreground, counted pixel by pixel
        top, left, bottom, right = largest_blob_bbox(frame)
        height = bottom - top + 1
        r0 = top + int(round(perception.GARMENT_ROWS[0] * height))
        r1 = top + int(round(perception.GARMENT_ROWS[1] * height))
        cx = (left + right + 1) / 2.0
        half = perception.TORSO_HALF_WIDTH * height
        c0 = int(np.ceil(cx - half - 0.5))
        c1 = int(np.floor(cx + half - 0.5)) + 1
        fg = foreground_mask(frame)
        count = int(fg[r0:r1, c0:c1].sum())
        assert int(result.garment_mask.sum()) == count

    def test_mask_binarized(self, frame):
        result = StubParseBackend().parse_garment(frame)
        assert set(np.unique(result.garment_mask)) <= {0.0, 1.0}

    def test_garment_zero_outside_mask(self, frame):
        result = StubParseBackend().parse_garment(frame)
        outside = result.garment_mask == 0
        assert np.all(result.garment_image[:, outside] == 0)

    def test_blank_frame_gives_empty_mask(self):
        result = StubParseBackend().parse_garment(BLANK)
        assert result.garment_mask.sum() == 0


class TestDerivedGarment:
    def test_garment_is_recolored_render(self, frame):
        pose = StubPoseBackend(seed=7)
        backend = DerivedGarmentParseBackend(pose)
        result = backend.parse_garment(frame)
        assert result.garment_mask.sum() > 0
        outside = result.garment_mask == 0
        assert np.all(result.garment_image[:, outside] == 0)

    def test_deterministic(self, frame):
        pose = StubPoseBackend(seed=7)
        a = DerivedGarmentParseBackend(pose).parse_garment(frame)
        b = DerivedGarmentParseBackend(pose).parse_garment(frame)
        np.testing.assert_array_equal(a.garment_image, b.garment_image)


class _Unavailable:
    name = "down"

    def available(self):
        return False

    def estimate_pose(self, frame):
        raise BackendError("down")


class TestProbe:
    def test_missing_backend_refused(self):
        backends = PerceptionSet(pose=_Unavailable(), densepose=StubDensePoseBackend(),
                                 parse=StubParseBackend())
        with pytest.raises(BackendError, match="pose"):
            backends.probe()

    def test_stub_set_probes_clean(self):
        PerceptionSet.stubs().probe()


class TestFailingWrapper:
    def test_fails_on_listed_calls(self, frame):
        backend = FailingBackendWrapper(StubPoseBackend(), fail_on={1})
        assert backend.estimate_pose(frame) is not None
        with pytest.raises(BackendError):
            backend.estimate_pose(frame)
        assert backend.estimate_pose(frame) is not None


POSE_SCRIPT = """#!/usr/bin/env python3
import json, sys
frame_path, out_dir = sys.argv[1], sys.argv[2]
result = {
    "detected": True,
    "shape_params": [0.0] * 10,
    "pose_params": [0.0] * 72,
    "camera": {"scale": 40.0, "tx": 64.0, "ty": 100.0},
    "confidence": 0.9,
}
with open(out_dir + "/result.json", "w") as fh:
    json.dump(result, fh)
"""


class TestSubprocessAdapter:
    def test_pose_adapter_round_trip(self, tmp_path, frame):
        script = tmp_path / "fake_pose.py"
        script.write_text(POSE_SCRIPT)
        script.chmod(script.stat().st_mode | stat.S_IEXEC)
        backend = SubprocessPoseBackend(["python3", str(script)])
        est = backend.estimate_pose(frame)
        assert isinstance(est, BodyPoseEstimate)
        assert est.camera == WeakPerspectiveCamera(40.0, 64.0, 100.0)
        assert est.confidence == 0.9

    def test_missing_command_unavailable(self):
        backend = SubprocessPoseBackend(["/nonexistent/estimator"])
        assert not backend.available()
        with pytest.raises(BackendError):
            backend.estimate_pose(BLANK)

    def test_backend_dir_resolution(self, tmp_path, monkeypatch, frame):
        script = tmp_path / "fake_pose.py"
        script.write_text(POSE_SCRIPT)
        (tmp_path / "pose_backend.json").write_text(
            json.dumps({"command": ["python3", str(script)]}))
        monkeypatch.setenv(perception.BACKEND_DIR_ENV, str(tmp_path))
        backend = perception.make_pose_backend("external")
        assert backend.estimate_pose(frame) is not None

    def test_external_without_dir_rejected(self, monkeypatch):
        monkeypatch.delenv(perception.BACKEND_DIR_ENV, raising=False)
        with pytest.raises(BackendError):
            perception.make_pose_backend("external")


class TestPoseEstimateValidation:
    def test_wrong_lengths_rejected(self):
        cam = WeakPerspectiveCamera(1.0, 0.0, 0.0)
        with pytest.raises(InputError):
            BodyPoseEstimate(np.zeros(9), np.zeros(72), cam)
        with pytest.raises(InputError):
            BodyPoseEstimate(np.zeros(10), np.zeros(71), cam)

    def test_non_finite_pose_rejected(self):
        cam = WeakPerspectiveCamera(1.0, 0.0, 0.0)
        theta = np.zeros(72)
        theta[0] = np.inf
        with pytest.raises(InputError):
            BodyPoseEstimate(np.zeros(10), theta, cam)
