import numpy as np
import pytest

from tryon import body
from tryon.errors import InputError
from tryon.measurement import (
    GridTexture,
    TrimmedBodyMesh,
    WeakPerspectiveCamera,
    project_vertices,
    render_measurement_garment,
    silhouette,
    trim_body_mesh,
)

T_POSE = np.zeros(body.NUM_POSE_PARAMS)
NEUTRAL = np.zeros(body.NUM_SHAPE_PARAMS)


def centered_camera(out_h=128, out_w=128):
    # frame the upper body: the trimmed mesh spans y in [1.02, 1.52]
    scale = out_h * 1.1
    return WeakPerspectiveCamera(scale=scale, tx=out_w / 2, ty=out_h / 2 + scale * 1.27)


class TestPartLabelTable:
    def test_checksum_validates(self):
        table = body.load_part_label_table()
        assert table["vertex_count"] == len(table["labels"])

    def test_table_matches_procedural_template(self):
        table = body.load_part_label_table()
        template = body.build_template()
        labels = [body.PART_NAMES[p] for p in template.part_ids]
        assert labels == table["labels"]

    def test_tampered_table_rejected(self, tmp_path, monkeypatch):
        import json
        table = body.load_part_label_table()
        table["labels"][0] = "left_foot"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(table))
        monkeypatch.setattr(body, "_data_path", lambda: bad)
        with pytest.raises(InputError):
            body.load_part_label_table()


class TestTrim:
    def test_retained_vertex_count_matches_table(self):
        # oracle: count vertices by label in the bundled table
        table = body.load_part_label_table()
        expected = sum(1 for label in table["labels"] if label in body.RETAINED_PARTS)
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        assert len(mesh.vertices) == expected

    def test_no_removed_part_faces_survive(self):
        template = body.build_template()
        removed_ids = {body.PART_INDEX[p] for p in body.PART_NAMES
                       if p not in body.RETAINED_PARTS}
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        # fewer faces than the full template, and every retained vertex label
        # is a retained part
        assert len(mesh.faces) < len(template.faces)
        retained_mask = np.isin(template.part_ids,
                                [body.PART_INDEX[p] for p in body.RETAINED_PARTS])
        kept_labels = template.part_ids[retained_mask]
        assert not set(kept_labels.tolist()) & removed_ids

    def test_trim_is_topology_only(self):
        beta2 = NEUTRAL.copy()
        beta2[0] = 2.0
        a = trim_body_mesh(T_POSE, NEUTRAL)
        b = trim_body_mesh(T_POSE, beta2)
        np.testing.assert_array_equal(a.faces, b.faces)

    def test_uv_present_for_all_retained_vertices(self):
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        assert mesh.uv.shape == (len(mesh.vertices), 2)
        assert np.all(np.isfinite(mesh.uv))

    def test_non_finite_pose_rejected(self):
        theta = T_POSE.copy()
        theta[5] = np.nan
        with pytest.raises(InputError):
            trim_body_mesh(theta, NEUTRAL)


class TestRender:
    def test_empty_mesh_renders_black(self):
        mesh = TrimmedBodyMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64),
                               np.zeros((0, 2)))
        img = render_measurement_garment(mesh, GridTexture(), centered_camera(), 64, 64)
        np.testing.assert_array_equal(img, 0.0)

    def test_mesh_behind_camera_renders_black(self):
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        mesh.vertices = mesh.vertices + np.array([0.0, 0.0, 100.0])
        img = render_measurement_garment(mesh, GridTexture(), centered_camera(), 64, 64)
        np.testing.assert_array_equal(img, 0.0)

    def test_deterministic(self):
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        cam = centered_camera()
        a = render_measurement_garment(mesh, GridTexture(), cam, 96, 96)
        b = render_measurement_garment(mesh, GridTexture(), cam, 96, 96)
        np.testing.assert_array_equal(a, b)

    def test_coverage_and_silhouette_against_projection_oracle(self):
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        cam = centered_camera()
        img = render_measurement_garment(mesh, GridTexture(), cam, 128, 128)
        fg = silhouette(img)
        coverage = fg.mean()
        assert 0.05 <= coverage <= 0.60

        # independent oracle: brute-force point-in-triangle over all pixels
        px, py, _ = project_vertices(mesh.vertices, cam)
        expected = np.zeros((128, 128), dtype=bool)
        gy, gx = np.mgrid[0:128, 0:128]
        gx = gx + 0.5
        gy = gy + 0.5
        for (i0, i1, i2) in mesh.faces:
            x0, x1, x2 = px[i0], px[i1], px[i2]
            y0, y1, y2 = py[i0], py[i1], py[i2]
            area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            if abs(area) < 1e-12:
                continue
            b0 = ((x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)) / area
            b1 = ((x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2)) / area
            expected |= (b0 >= 0) & (b1 >= 0) & (1.0 - b0 - b1 >= 0)

        # rendered silhouette equals the oracle within a 2 px dilation band
        from scipy.ndimage import binary_dilation
        grown = binary_dilation(expected, iterations=2)
        shrunk = np.zeros_like(expected)
        shrunk[binary_dilation(~expected, iterations=2) == 0] = True
        assert np.all(fg.astype(bool) <= grown)
        assert np.all(shrunk <= fg.astype(bool))

    def test_translation_equivariance(self):
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        cam = centered_camera()
        base = render_measurement_garment(mesh, GridTexture(), cam, 128, 128)
        shifted = render_measurement_garment(mesh, GridTexture(), cam.translated(7, -5),
                                             128, 128)
        np.testing.assert_array_equal(shifted[:, :-5 or None, 7:],
                                      base[:, 5:, :-7])

    def test_no_pixel_outside_projected_bbox(self):
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        cam = centered_camera()
        img = render_measurement_garment(mesh, GridTexture(), cam, 128, 128)
        px, py, _ = project_vertices(mesh.vertices, cam)
        fg = silhouette(img)
        ys, xs = np.nonzero(fg)
        assert xs.min() >= np.floor(px.min()) - 1 and xs.max() <= np.ceil(px.max()) + 1
        assert ys.min() >= np.floor(py.min()) - 1 and ys.max() <= np.ceil(py.max()) + 1

    def test_grid_pattern_visible(self):
        mesh = trim_body_mesh(T_POSE, NEUTRAL)
        tex = GridTexture()
        img = render_measurement_garment(mesh, tex, centered_camera(256, 256), 256, 256)
        fg = silhouette(img).astype(bool)
        values = img[0][fg]
        # both line and fill shades appear on the surface
        assert (np.isclose(values, tex.line_color[0]).any() and
                np.isclose(values, tex.fill_color[0]).any())


class TestGridTexture:
    def test_invalid_parameters_rejected(self):
        with pytest.raises(InputError):
            GridTexture(cell_size=3, line_width=3)
        with pytest.raises(InputError):
            GridTexture(cell_size=8, line_width=0)


class TestCamera:
    def test_positive_scale_enforced(self):
        with pytest.raises(InputError):
            WeakPerspectiveCamera(scale=0.0, tx=0, ty=0)
