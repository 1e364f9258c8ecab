import math

import numpy as np
import pytest

from voxloco import geom, percept as pc, terrain as tr


def gen(family, d, seed=1):
    return tr.generate(tr.TerrainSpec(family, d, seed))


def march_oracle(t, origin, direction, max_range, step=None):
    """Fixed-step marcher: find the first occupied sample, then bisect the entry."""
    if step is None:
        step = t.cell_size / 50.0
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if tr.occupancy_at(t, origin):
        return 0.0
    lo = 0.0
    hit = None
    s = step
    while s <= max_range:
        if tr.occupancy_at(t, origin + s * direction):
            hit = s
            break
        lo = s
        s += step
    if hit is None:
        return max_range
    for _ in range(60):
        mid = 0.5 * (lo + hit)
        if tr.occupancy_at(t, origin + mid * direction):
            hit = mid
        else:
            lo = mid
    return min(hit, max_range)


class TestRaycast:
    def test_analytic_ground_hit(self):
        t = gen("flat", 0.0)
        assert pc.raycast(t, (0.0, 0.0, 1.0), (0.0, 0.0, -1.0)) == pytest.approx(1.0, abs=1e-9)

    def test_miss_clamps(self):
        t = gen("flat", 0.0)
        assert pc.raycast(t, (0.0, 0.0, 1.0), (0.0, 0.0, 1.0), 4.0) == 4.0

    def test_non_unit_direction_rejected(self):
        t = gen("flat", 0.0)
        with pytest.raises(ValueError):
            pc.raycast(t, (0, 0, 1), (0, 0, -2.0))

    def test_origin_below_bedrock(self):
        t = gen("flat", 0.0)
        assert pc.raycast(t, (0.0, 0.0, -0.5), (0.0, 0.0, 1.0)) == 0.0

    def test_oblique_bedrock_distance(self):
        t = gen("flat", 0.0)
        d = np.array([1.0, 0.0, -1.0]) / math.sqrt(2)
        assert pc.raycast(t, (0.0, 0.0, 0.5), d) == pytest.approx(0.5 * math.sqrt(2), abs=1e-9)

    def test_matches_marching_oracle(self):
        rng = np.random.default_rng(123)
        fams = ["high_step", "gap", "stairs", "overhang", "discrete"]
        mismatches = 0
        for k in range(10):
            t = gen(fams[k % len(fams)], rng.uniform(0.2, 1.0), seed=int(rng.integers(1 << 30)))
            for _ in range(40):
                origin = np.array([rng.uniform(-1.0, 8.0),
                                   rng.uniform(-1.8, 1.8),
                                   rng.uniform(0.05, 1.5)])
                d = rng.normal(size=3)
                d /= np.linalg.norm(d)
                got = pc.raycast(t, origin, d, 4.0)
                want = march_oracle(t, origin, d, 4.0)
                if abs(got - want) > 1e-6:
                    mismatches += 1
        assert mismatches == 0


class TestRenderFront:
    def test_ground_plane_analytic(self):
        t = gen("flat", 0.0)
        cam = pc.CameraModel(translation=np.zeros(3))
        pos = np.array([0.0, 0.0, 0.4])
        img = pc.render_front(t, cam, pos, geom.QUAT_IDENTITY)
        dirs = cam.ray_grid()
        for j in [0, cam.height // 2, cam.height - 1]:
            for i in [0, cam.width // 2, cam.width - 1]:
                dz = dirs[j, i, 2]
                expect = cam.max_range if dz >= 0 else min(cam.max_range, 0.4 / -dz)
                expect = max(expect, cam.min_range)
                assert img.data[j, i] == pytest.approx(expect, abs=1e-5)

    def test_wall_distance_per_texel(self):
        t = gen("flat", 0.0)
        # full-height wall whose near face sits 0.3 m in front of the camera
        ix = round((1.3 - t.origin[0]) / t.cell_size)
        t.occupancy[ix:, :, :] = 1
        cam = pc.CameraModel(translation=np.zeros(3))
        pos = np.array([1.0, 0.0, 1.0])
        img = pc.render_front(t, cam, pos, geom.QUAT_IDENTITY)
        dirs = cam.ray_grid()
        j, i = cam.height // 2, cam.width // 4
        expect = 0.3 / dirs[j, i, 0]
        assert img.data[j, i] == pytest.approx(expect, abs=1e-5)

    def test_zero_offset_pose_identity(self):
        t = gen("stairs", 0.5, seed=2)
        cam = pc.CameraModel()
        pos = np.array([0.0, 0.0, 0.35])
        a = pc.render_front(t, cam, pos, geom.QUAT_IDENTITY)
        q = geom.quat_from_yaw(0.0)
        b = pc.render_front(t, cam, pos, q)
        assert np.array_equal(a.data, b.data)

    def test_range_clamps(self):
        t = gen("discrete", 1.0, seed=8)
        cam = pc.CameraModel()
        img = pc.render_front(t, cam, np.array([0.0, 0.0, 0.3]), geom.QUAT_IDENTITY)
        assert img.data.min() >= cam.min_range
        assert img.data.max() <= cam.max_range

    def test_translation_equivariance_bitwise(self):
        spec = tr.TerrainSpec("stairs", 0.75, 31)
        t1 = tr.generate(spec)
        t2 = tr.generate(spec)
        t2.origin = t2.origin + np.array([1.0, 0.5, 0.0])
        cam = pc.CameraModel()
        pos = np.array([0.25, -0.25, 0.5])
        a = pc.render_front(t1, cam, pos, geom.QUAT_IDENTITY)
        b = pc.render_front(t2, cam, pos + np.array([1.0, 0.5, 0.0]), geom.QUAT_IDENTITY)
        assert np.array_equal(a.data, b.data)


class TestCubeMap:
    def test_downward_center_is_height(self):
        t = gen("flat", 0.0)
        cube = pc.render_cubemap(t, np.array([0.0, 0.0, 0.7]), geom.QUAT_IDENTITY)
        c = pc.FACE_RES // 2
        # center texels straddle the axis; both should be ~h within texel obliquity
        assert cube.face("downward")[c, c] == pytest.approx(0.7, rel=0.01)

    def test_overhang_upward_face(self):
        t = gen("overhang", 1.0, seed=3)
        clearance = t.params["clearance"]
        x = t.params["overhang_x"] + 0.5
        h = 0.12
        cube = pc.render_cubemap(t, np.array([x, 0.0, h]), geom.QUAT_IDENTITY)
        c = pc.FACE_RES // 2
        assert cube.face("upward")[c, c] == pytest.approx(clearance - h, rel=0.02)

    def test_yaw_pi_swaps_left_right(self):
        t = gen("discrete", 0.9, seed=17)
        pos = np.array([2.0, 0.0, 0.32])
        a = pc.render_cubemap(t, pos, geom.QUAT_IDENTITY)
        b = pc.render_cubemap(t, pos, geom.quat_from_yaw(math.pi))
        assert np.allclose(b.face("left"), a.face("right"), atol=1e-5)
        assert np.allclose(b.face("right"), a.face("left"), atol=1e-5)

    def test_five_faces_no_rear(self):
        t = gen("flat", 0.0)
        cube = pc.render_cubemap(t, np.array([0, 0, 0.3]), geom.QUAT_IDENTITY)
        assert cube.faces.shape == (5, pc.FACE_RES, pc.FACE_RES)


class TestProbeFeet:
    def test_down_probe(self):
        t = gen("flat", 0.0)
        feet = np.array([[0.2, 0.1, 0.1], [0.2, -0.1, 0.1],
                         [-0.2, 0.1, 0.1], [-0.2, -0.1, 0.1]])
        fp = pc.probe_feet(t, feet)
        assert np.allclose(fp.samples[:, 0], 0.1, atol=1e-6)

    def test_open_air_clamps(self):
        t = gen("flat", 0.0)
        feet = np.full((4, 3), 1.0)
        fp = pc.probe_feet(t, feet)
        assert np.all(fp.samples == pytest.approx(0.5))

    def test_lateral_probe_against_step(self):
        t = gen("high_step", 1.0, seed=7)
        x_step = t.params["step_x"]
        foot = np.array([x_step - 0.2, 0.0, 0.1])
        feet = np.stack([foot] * 4)
        fp = pc.probe_feet(t, feet)
        assert fp.samples[0, 1] == pytest.approx(0.2, abs=1e-6)  # +x probe hits face

    def test_nonfinite_rejected(self):
        t = gen("flat", 0.0)
        feet = np.full((4, 3), np.nan)
        with pytest.raises(ValueError):
            pc.probe_feet(t, feet)


class TestCorrupt:
    def _img(self):
        t = gen("stairs", 0.5, seed=2)
        cam = pc.CameraModel()
        return pc.render_front(t, cam, np.array([0.0, 0.0, 0.35]), geom.QUAT_IDENTITY)

    def test_none_is_identity(self):
        img = self._img()
        out = pc.corrupt(img, "none", seed=5)
        assert np.array_equal(out.data, img.data)

    def test_blind_all_min_range(self):
        img = self._img()
        out = pc.corrupt(img, "blind", seed=5)
        assert np.all(out.data == np.float32(0.05))

    def test_patterned_coverage_fraction(self):
        img = self._img()
        for seed in range(20):
            _, mask = pc.patterned_rects(img.data.shape, seed)
            assert 0.10 <= mask.mean() <= 0.60
            out = pc.corrupt(img, "patterned", seed=seed)
            assert np.all(out.data[mask] == np.float32(img.min_range))

    def test_patterned_deterministic(self):
        img = self._img()
        a = pc.corrupt(img, "patterned", seed=9)
        b = pc.corrupt(img, "patterned", seed=9)
        assert np.array_equal(a.data, b.data)

    def test_clamped(self):
        img = self._img()
        out = pc.corrupt(img, "patterned", seed=3)
        assert out.data.min() >= img.min_range and out.data.max() <= img.max_range


class TestSolidAngles:
    def test_ratio_limit(self):
        # texel-integral ratio approaches 3*sqrt(3) at O(1/res)
        ratios = [pc.solid_angle_stats(r)[2] for r in (16, 64, 256, 512)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] == pytest.approx(3 * math.sqrt(3), rel=0.01)

    def test_face_total_and_five_face_sum(self):
        total = pc.face_solid_angle_total(16)
        assert total == pytest.approx(4 * math.pi / 6, rel=1e-9)
        assert 5 * total == pytest.approx(4 * math.pi * 5 / 6, rel=1e-9)

    def test_numerical_integration_oracle(self):
        # midpoint quadrature of dA / (1 + x^2 + y^2)^(3/2) over one texel
        res = 8
        edges = np.linspace(-1, 1, res + 1)
        i, j = 2, 5
        n = 400
        xs = np.linspace(edges[j], edges[j + 1], n, endpoint=False) + (edges[j + 1] - edges[j]) / (2 * n)
        ys = np.linspace(edges[i], edges[i + 1], n, endpoint=False) + (edges[i + 1] - edges[i]) / (2 * n)
        xx, yy = np.meshgrid(xs, ys)
        da = (edges[j + 1] - edges[j]) * (edges[i + 1] - edges[i]) / (n * n)
        quad = np.sum(da / (1 + xx**2 + yy**2) ** 1.5)
        exact = pc._rect_solid_angle(edges[j], edges[j + 1], edges[i], edges[i + 1])
        assert quad == pytest.approx(exact, rel=1e-6)

    def test_2x2_symmetry(self):
        lo, hi, ratio = pc.solid_angle_stats(2)
        assert lo == pytest.approx(hi)
        assert ratio == pytest.approx(1.0)


class TestPgm:
    def test_dump(self, tmp_path):
        img = pc.DepthImage(np.full((4, 6), 1.234, dtype=np.float32))
        p = tmp_path / "d.pgm"
        pc.save_pgm(img, p)
        blob = p.read_bytes()
        assert blob.startswith(b"P5\n6 4\n65535\n")
        px = np.frombuffer(blob.split(b"65535\n", 1)[1], dtype=">u2").reshape(4, 6)
        assert px[0, 0] == 1234
