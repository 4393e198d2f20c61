import math

import numpy as np
import pytest
from conftest import brute_dbscan, brute_point_segment_distances, make_mpc, partitions_equal

from dmimo_clusters import _kernels
from dmimo_clusters.geometry import (SPEED_OF_LIGHT, PanelGeometry, PointCloud, build_ray,
                                     dbscan, groups_from_labels, map_interactions,
                                     partial_delay, ray_candidates, select_real_io)

C = SPEED_OF_LIGHT


def panel(pid=1, pos=(0.0, 0.0, 0.0)):
    return PanelGeometry(panel_id=pid, position=np.asarray(pos))


class TestBuildRay:
    def test_axis_aligned_x(self):
        mpc = make_mpc(delay=1.0 / C, azimuth=0.0, elevation=math.pi / 2)
        ray = build_ray(mpc, panel())
        np.testing.assert_allclose(ray.direction, [1.0, 0.0, 0.0], atol=1e-15)
        assert ray.max_range == pytest.approx(1.0)

    def test_axis_aligned_y(self):
        mpc = make_mpc(azimuth=math.pi / 2, elevation=math.pi / 2)
        ray = build_ray(mpc, panel())
        np.testing.assert_allclose(ray.direction, [0.0, 1.0, 0.0], atol=1e-15)

    def test_random_directions_unit_norm(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            az = rng.uniform(-math.pi, math.pi)
            el = rng.uniform(0.0, math.pi)
            ray = build_ray(make_mpc(azimuth=az, elevation=el), panel())
            assert abs(np.linalg.norm(ray.direction) - 1.0) <= 1e-9

    def test_nonfinite_angles_rejected(self):
        with pytest.raises(ValueError):
            build_ray(make_mpc(azimuth=math.nan), panel())

    def test_panel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            build_ray(make_mpc(panel=2), panel(pid=1))


class TestRayCandidates:
    def test_plane_grid(self):
        # grid on the plane x=5 (offset so no point sits exactly on the
        # 0.5 m boundary); the +x ray selects points within 0.5 m of the axis
        ticks = np.arange(-2, 2, 0.05) + 0.0131
        ys, zs = np.meshgrid(ticks, ticks)
        pts = np.column_stack([np.full(ys.size, 5.0), ys.ravel(), zs.ravel()])
        cloud = PointCloud(pts)
        ray = build_ray(make_mpc(delay=10.0 / C, azimuth=0.0, elevation=math.pi / 2), panel())
        got = ray_candidates(ray, cloud, 0.5)
        radial = np.sqrt(pts[:, 1] ** 2 + pts[:, 2] ** 2)
        expected = np.nonzero(radial <= 0.5)[0]
        assert np.array_equal(got, expected)

    def test_empty_neighborhood(self):
        cloud = PointCloud(np.array([[0.0, 50.0, 0.0]]))
        ray = build_ray(make_mpc(delay=10.0 / C), panel())
        assert ray_candidates(ray, cloud, 0.5).size == 0

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-20, 20, size=(10_000, 3))
        cloud = PointCloud(pts)
        for _ in range(20):
            az = rng.uniform(-math.pi, math.pi)
            el = rng.uniform(0.0, math.pi)
            delay = rng.uniform(5.0, 40.0) / C
            origin = rng.uniform(-5, 5, size=3)
            ray = build_ray(make_mpc(delay=delay, azimuth=az, elevation=el),
                            panel(pos=origin))
            got = set(ray_candidates(ray, cloud, 0.5).tolist())
            dists = brute_point_segment_distances(pts, ray.origin, ray.end)
            expected = set(np.nonzero(dists <= 0.5)[0].tolist())
            assert got == expected

    def test_max_range_caps_the_segment(self):
        cloud = PointCloud(np.array([[2.0, 0.0, 0.0], [9.0, 0.0, 0.0]]))
        ray = build_ray(make_mpc(delay=5.0 / C), panel())
        assert ray_candidates(ray, cloud, 0.5).tolist() == [0]


class TestDbscan:
    def test_two_separated_blobs(self):
        rng = np.random.default_rng(3)
        a = rng.normal(0.0, 0.2, size=(30, 3))
        b = rng.normal(0.0, 0.2, size=(30, 3)) + [10.0, 0.0, 0.0]
        labels = dbscan(np.vstack([a, b]), eps=1.0, min_pts=3)
        assert len(set(labels.tolist())) == 2
        assert (labels >= 0).all()
        assert len(set(labels[:30].tolist())) == 1
        assert len(set(labels[30:].tolist())) == 1

    def test_all_isolated_points_are_noise(self):
        pts = np.array([[0.0, 0, 0], [5.0, 0, 0], [10.0, 0, 0]])
        labels = dbscan(pts, eps=1.0, min_pts=2)
        assert (labels == -1).all()

    def test_matches_quadratic_reference(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            pts = rng.uniform(0, 10, size=(200, 3))
            got = dbscan(pts, eps=0.9, min_pts=4)
            ref = brute_dbscan(pts, eps=0.9, min_pts=4)
            assert partitions_equal(got, ref)

    def test_order_independence(self):
        rng = np.random.default_rng(13)
        pts = rng.uniform(0, 6, size=(150, 3))
        labels = dbscan(pts, eps=0.8, min_pts=3)
        perm = rng.permutation(len(pts))
        permuted = dbscan(pts[perm], eps=0.8, min_pts=3)
        assert partitions_equal(labels[perm], permuted)

    def test_numpy_and_numba_paths_agree(self):
        rng = np.random.default_rng(17)
        pts = rng.uniform(0, 8, size=(300, 3))
        a = _kernels.dbscan_labels_np(pts, 0.7, 4)
        assert partitions_equal(a, brute_dbscan(pts, 0.7, 4))
        if _kernels.HAVE_NUMBA:
            b = _kernels.dbscan_labels_nb(pts, 0.7, 4)
            assert np.array_equal(a, b)


class TestSelectRealIo:
    def test_nearest_group_wins(self):
        cents = [np.array([7.0, 0, 0]), np.array([3.0, 0, 0])]
        assert select_real_io(cents, panel()) == 1

    def test_single_group(self):
        assert select_real_io([np.array([4.0, 1, 0])], panel()) == 0

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            cents = rng.uniform(-10, 10, size=(20, 3))
            expected = int(np.argmin(np.linalg.norm(cents, axis=1)))
            assert select_real_io(list(cents), panel()) == expected

    def test_permutation_invariant_ties(self):
        # two centroids equidistant from the panel
        cents = [np.array([5.0, 0.0, 0.0]), np.array([-5.0, 0.0, 0.0])]
        k1 = select_real_io(cents, panel())
        k2 = select_real_io(cents[::-1], panel())
        assert np.allclose(cents[k1], cents[::-1][k2])
        assert (cents[k1] == np.array([-5.0, 0.0, 0.0])).all()

    def test_empty_groups_rejected(self):
        with pytest.raises(ValueError):
            select_real_io([], panel())


class TestPartialDelay:
    def test_last_hop_spans_whole_path(self):
        mpc = make_mpc(delay=10.0 / C)
        assert partial_delay(mpc, np.array([10.0, 0, 0]), panel()) == pytest.approx(0.0)

    def test_direct_arithmetic(self):
        mpc = make_mpc(delay=50e-9)
        got = partial_delay(mpc, np.array([6.0, 0, 0]), panel())
        assert got == pytest.approx((50e-9 * C - 6.0) / C, rel=1e-12)
        assert got == pytest.approx(29.986e-9, abs=1e-12)

    def test_random_recomputation(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            delay = rng.uniform(10e-9, 100e-9)
            io = rng.uniform(-5, 5, size=3)
            p = rng.uniform(-5, 5, size=3)
            got = partial_delay(make_mpc(delay=delay), io, panel(pos=p))
            expected = max((delay * C - np.linalg.norm(io - p)) / C, 0.0)
            assert got == pytest.approx(expected, abs=1e-18)
            assert 0.0 <= got <= delay

    def test_inconsistent_io_clamps_to_zero(self):
        mpc = make_mpc(delay=1e-9)  # 0.3 m path
        assert partial_delay(mpc, np.array([5.0, 0, 0]), panel()) == 0.0


class TestMapInteractions:
    def _plane_cloud(self, x=6.0, half=1.5, pitch=0.05):
        ys, zs = np.meshgrid(np.arange(-half, half, pitch), np.arange(-half, half, pitch))
        return np.column_stack([np.full(ys.size, x), ys.ravel(), zs.ravel()])

    def test_reflector_plane_intersection(self):
        # ray hits the plane x=6 straight on; IO must land near the analytic hit
        cloud = PointCloud(self._plane_cloud())
        mpc = make_mpc(delay=40e-9, azimuth=0.0, elevation=math.pi / 2)
        result = map_interactions([mpc], {1: panel()}, cloud, delta0=0.5)
        assert len(result.interactions) == 1
        io = result.interactions[0].io_center
        assert np.linalg.norm(io - np.array([6.0, 0.0, 0.0])) <= 0.5
        tau_p = result.interactions[0].partial_delay
        assert tau_p == pytest.approx(40e-9 - 6.0 / C, abs=0.5 / C)

    def test_unmapped_mpc_reported(self):
        cloud = PointCloud(self._plane_cloud())
        away = make_mpc(delay=40e-9, azimuth=math.pi / 2, elevation=math.pi / 2)
        result = map_interactions([away], {1: panel()}, cloud, delta0=0.5)
        assert not result.interactions
        assert len(result.diagnostics) == 1
        assert result.diagnostics[0].reason == "no_candidates"

    def test_sparse_hits_all_noise(self):
        # four isolated points along the ray, below min_pts density
        pts = np.array([[2.0, 0, 0], [3.0, 2, 0], [4.0, -2, 0], [5.0, 3, 0]])
        result = map_interactions([make_mpc(delay=40e-9)], {1: panel()},
                                  PointCloud(pts), delta0=0.3, dbscan_min_pts=4)
        assert not result.interactions
        assert result.diagnostics[0].reason == "all_noise"

    def test_mapped_invariants(self):
        rng = np.random.default_rng(31)
        cloud = PointCloud(self._plane_cloud())
        mpcs = [make_mpc(delay=rng.uniform(25e-9, 60e-9),
                         azimuth=rng.uniform(-0.15, 0.15),
                         elevation=math.pi / 2 + rng.uniform(-0.15, 0.15))
                for _ in range(40)]
        result = map_interactions(mpcs, {1: panel()}, cloud, delta0=0.5)
        for ia in result.interactions:
            assert 0.0 <= ia.partial_delay <= ia.mpc.delay
            dist = np.linalg.norm(ia.io_center - np.zeros(3))
            assert dist <= ia.mpc.delay * C + 1e-9 * C
