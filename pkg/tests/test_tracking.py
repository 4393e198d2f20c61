import math

import numpy as np
import pytest

from dmimo_clusters.synth import MovingClusterConfig, gen_moving_cluster
from dmimo_clusters.tracking import (H, PHI, Association, FilterConfig, Observation,
                                     TrackState, associate, closeness, log_closeness,
                                     predict, regularize_spread, run_tracking,
                                     spread_matrix, start_track, update)


def make_track(state=None, cov=None, track_id=0, members=None, weights=None):
    state = np.zeros(8) if state is None else np.asarray(state, dtype=float)
    cov = np.eye(8) if cov is None else np.asarray(cov, dtype=float)
    members = np.zeros((1, 4)) if members is None else members
    weights = np.ones(len(members)) if weights is None else weights
    return TrackState(track_id=track_id, state=state, cov=cov, status="tracked",
                      birth=0, last_seen=0, member_points=members, member_weights=weights)


def make_obs(centroid4, scatter=0.5, n=8, seed=0, cluster_id=0):
    rng = np.random.default_rng(seed)
    centroid4 = np.asarray(centroid4, dtype=float)
    member_io = centroid4[:3] + rng.normal(0, scatter, size=(n, 3))
    member_tau = (centroid4[3] + rng.normal(0, scatter, size=n)) * 1e-9
    return Observation(cluster_id=cluster_id, centroid_io=centroid4[:3],
                       centroid_tau_s=centroid4[3] * 1e-9,
                       member_io=member_io, member_tau_s=member_tau,
                       member_power=rng.uniform(0.5, 1.5, size=n))


class TestPredict:
    def test_constant_velocity_step(self):
        cfg = FilterConfig(q=np.zeros((8, 8)))
        tr = make_track(state=[0, 1, 0, 0, 0, 0, 0, 0], cov=np.zeros((8, 8)))
        predict(tr, cfg)
        assert tr.state[0] == pytest.approx(1.0)
        assert tr.state[1] == pytest.approx(1.0)
        assert np.all(tr.state[2:] == 0.0)

    def test_zero_state_zero_cov(self):
        cfg = FilterConfig(q=np.zeros((8, 8)))
        tr = make_track(state=np.zeros(8), cov=np.zeros((8, 8)))
        predict(tr, cfg)
        assert np.all(tr.state == 0.0)
        assert np.all(tr.cov == 0.0)

    def test_matches_dense_matrix_oracle(self):
        rng = np.random.default_rng(1)
        state = rng.normal(0, 2, size=8)
        a = rng.normal(0, 1, size=(8, 8))
        cov = a @ a.T
        q = np.diag(rng.uniform(0.01, 0.5, size=8))
        # independent oracle: explicit 8x8 transition written out by hand
        phi = np.zeros((8, 8))
        for blk in range(4):
            phi[2 * blk, 2 * blk] = 1.0
            phi[2 * blk, 2 * blk + 1] = 1.0
            phi[2 * blk + 1, 2 * blk + 1] = 1.0
        expected_state = phi @ state
        expected_cov = phi @ cov @ phi.T + q
        tr = make_track(state=state.copy(), cov=cov.copy())
        predict(tr, FilterConfig(q=q))
        np.testing.assert_allclose(tr.state, expected_state, rtol=0, atol=1e-12)
        np.testing.assert_allclose(tr.cov, expected_cov, rtol=0, atol=1e-12)


class TestSpreadMatrix:
    def test_members_at_mean_zero_matrix(self):
        pts = np.tile(np.array([1.0, 2.0, 3.0, 4.0]), (5, 1))
        c = spread_matrix(pts, np.ones(5), np.array([1.0, 2.0, 3.0, 4.0]))
        assert np.all(c == 0.0)

    def test_two_symmetric_members(self):
        mean = np.zeros(4)
        pts = np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]])
        c = spread_matrix(pts, np.ones(2), mean)
        np.testing.assert_allclose(c, np.diag([1.0, 0, 0, 0]))

    def test_matches_weighted_covariance_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = rng.integers(2, 15)
            pts = rng.normal(0, 2, size=(n, 4))
            w = rng.uniform(0.1, 3.0, size=n)
            mean = rng.normal(0, 1, size=4)
            got = spread_matrix(pts, w, mean)
            expected = np.zeros((4, 4))
            for i in range(n):
                d = pts[i] - mean
                expected += w[i] * np.outer(d, d)
            expected /= w.sum()
            np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-14)


class TestCloseness:
    def test_identity_spread_at_mean(self):
        mean = np.array([1.0, 2.0, 3.0, 4.0])
        val = closeness(mean, mean, np.eye(4))
        assert val == pytest.approx((2 * math.pi) ** -2, rel=1e-5)

    def test_zero_distance_beats_any_other(self):
        mean = np.zeros(4)
        spread = np.diag([2.0, 1.0, 1.0, 3.0])
        at_mean = closeness(mean, mean, spread)
        for _ in range(20):
            other = np.random.default_rng(5).normal(0, 3, size=4)
            assert at_mean >= closeness(other, mean, spread)

    def test_matches_quadratic_form_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = rng.normal(0, 1, size=(4, 4))
            spread = a @ a.T + 0.1 * np.eye(4)
            mean = rng.normal(0, 2, size=4)
            x = rng.normal(0, 2, size=4)
            got = closeness(x, mean, spread)
            # oracle applies the documented ridge, then the density formula
            # with an explicit inverse and determinant
            c = spread + (1e-6 * np.trace(spread) / 4.0) * np.eye(4)
            q = x - mean
            expected = ((2 * math.pi) ** -2 / math.sqrt(np.linalg.det(c))
                        * math.exp(-0.5 * q @ np.linalg.inv(c) @ q))
            assert got == pytest.approx(expected, rel=1e-12)

    def test_singleton_cluster_regularized(self):
        c = regularize_spread(np.zeros((4, 4)))
        assert np.all(np.diag(c) == 1e-9)
        assert math.isfinite(log_closeness(np.zeros(4), np.zeros(4), np.zeros((4, 4))))


class TestUpdate:
    def test_near_perfect_measurement_limit(self):
        cfg = FilterConfig(q=np.zeros((8, 8)), r=1e-12 * np.eye(4))
        tr = start_track(0, make_obs([0.0, 0, 0, 10.0]), cfg, snapshot=0)
        predict(tr, cfg)
        obs = make_obs([5.0, -2.0, 1.0, 12.0], seed=2)
        update(tr, obs, cfg, snapshot=1)
        got = tr.measured_state
        np.testing.assert_allclose(got, [5.0, -2.0, 1.0, 12.0], atol=1e-6)

    def test_hand_computed_cycle_one_dimension(self):
        # Q=0, R=I, M0=I on the (x, dx) block: one predict/update cycle.
        # Hand algebra: after predict M=[[2,1],[1,1]], S=3, K=[2/3,1/3],
        # x_new = x_pred + 2/3*(z - x_pred), M_new=[[2/3,1/3],[1/3,2/3]].
        q = np.zeros((8, 8))
        r = np.eye(4)
        cfg = FilterConfig(q=q, r=r)
        cov = np.eye(8)
        state = np.zeros(8)
        tr = make_track(state=state, cov=cov)
        predict(tr, cfg)
        obs = Observation(cluster_id=0, centroid_io=[3.0, 0, 0], centroid_tau_s=0.0,
                          member_io=np.zeros((1, 3)), member_tau_s=np.zeros(1),
                          member_power=np.ones(1))
        update(tr, obs, cfg, snapshot=1)
        assert tr.state[0] == pytest.approx(2.0, rel=1e-12)       # 0 + 2/3 * 3
        assert tr.state[1] == pytest.approx(1.0, rel=1e-12)       # 0 + 1/3 * 3
        np.testing.assert_allclose(tr.cov[:2, :2], [[2 / 3, 1 / 3], [1 / 3, 2 / 3]],
                                   rtol=1e-12)

    def test_full_cycle_matches_dense_oracle(self):
        rng = np.random.default_rng(11)
        state = rng.normal(0, 2, size=8)
        a = rng.normal(0, 1, size=(8, 8))
        cov = a @ a.T + np.eye(8)
        q = np.diag(rng.uniform(0.01, 0.3, size=8))
        rmat = np.diag(rng.uniform(0.05, 0.4, size=4))
        z4 = rng.normal(0, 3, size=4)
        # oracle: dense matrices, explicit inverse
        h = np.zeros((4, 8))
        for blk in range(4):
            h[blk, 2 * blk] = 1.0
        phi = np.kron(np.eye(4), np.array([[1.0, 1.0], [0.0, 1.0]]))
        xs = phi @ state
        ms = phi @ cov @ phi.T + q
        k = ms @ h.T @ np.linalg.inv(h @ ms @ h.T + rmat)
        expected_cov = (np.eye(8) - k @ h) @ ms
        expected_cov = 0.5 * (expected_cov + expected_cov.T)
        expected_state = xs + k @ (z4 - h @ xs)

        cfg = FilterConfig(q=q, r=rmat)
        tr = make_track(state=state.copy(), cov=cov.copy())
        predict(tr, cfg)
        obs = Observation(cluster_id=0, centroid_io=z4[:3], centroid_tau_s=z4[3] * 1e-9,
                          member_io=np.zeros((1, 3)), member_tau_s=np.zeros(1),
                          member_power=np.ones(1))
        update(tr, obs, cfg, snapshot=1)
        np.testing.assert_allclose(tr.state, expected_state, rtol=0, atol=1e-12)
        np.testing.assert_allclose(tr.cov, expected_cov, rtol=0, atol=1e-12)

    def test_covariance_stays_symmetric_psd(self):
        rng = np.random.default_rng(13)
        cfg = FilterConfig()
        tr = start_track(0, make_obs([0, 0, 0, 10.0]), cfg, snapshot=0)
        for snap in range(1, 25):
            predict(tr, cfg)
            if snap % 3 == 0:
                update(tr, None, cfg, snap)
                if tr.status == "dead":
                    break
            else:
                z = rng.normal(0, 1, size=4) + [0, 0, 0, 10.0]
                update(tr, make_obs(z, seed=snap), cfg, snap)
            np.testing.assert_allclose(tr.cov, tr.cov.T, atol=1e-12)
            assert np.linalg.eigvalsh(tr.cov).min() >= -1e-10

    def test_miss_keeps_state_updates_cov(self):
        cfg = FilterConfig()
        tr = start_track(0, make_obs([1.0, 2.0, 3.0, 10.0]), cfg, snapshot=0)
        predict(tr, cfg)
        state_before = tr.state.copy()
        cov_before = tr.cov.copy()
        update(tr, None, cfg, snapshot=1)
        np.testing.assert_array_equal(tr.state, state_before)
        assert not np.allclose(tr.cov, cov_before)
        assert tr.status == "disappeared"
        assert tr.missed == 1


class TestAssociate:
    def test_one_track_one_observation(self):
        cfg = FilterConfig()
        obs = make_obs([0.0, 0, 0, 10.0])
        tr = start_track(0, obs, cfg, snapshot=0)
        predict(tr, cfg)
        assoc = associate([tr], [make_obs([0.1, 0, 0, 10.0], seed=4)], cfg)
        assert assoc.matched == [(0, 0)]
        assert not assoc.born and not assoc.disappeared

    def test_two_far_targets_no_swap(self):
        cfg = FilterConfig()
        obs_a = make_obs([0.0, 0, 0, 10.0], cluster_id=0)
        obs_b = make_obs([50.0, 0, 0, 40.0], cluster_id=1, seed=9)
        tr_a = start_track(0, obs_a, cfg, snapshot=0)
        tr_b = start_track(1, obs_b, cfg, snapshot=0)
        for tr in (tr_a, tr_b):
            predict(tr, cfg)
        new_a = make_obs([0.3, 0.1, 0, 10.0], seed=10, cluster_id=0)
        new_b = make_obs([50.2, -0.1, 0, 40.0], seed=11, cluster_id=1)
        assoc = associate([tr_a, tr_b], [new_b, new_a], cfg)
        assert sorted(assoc.matched) == [(0, 1), (1, 0)]

    def test_first_snapshot_all_born(self):
        assoc = associate([], [make_obs([0, 0, 0, 1.0])], FilterConfig())
        assert assoc.born == [0] and not assoc.matched

    def test_symmetric_in_role_swap(self):
        cfg = FilterConfig()
        obs = [make_obs([0.0, 0, 0, 10.0], seed=1), make_obs([8.0, 0, 0, 20.0], seed=2)]
        tracks = [start_track(i, o, cfg, 0) for i, o in enumerate(obs)]
        for tr in tracks:
            predict(tr, cfg)
        fwd = associate(tracks, obs, cfg)
        assert sorted(fwd.matched) == [(0, 0), (1, 1)]


class TestLifecycle:
    def _run_with_gap(self, gap, n_th=5):
        config = MovingClusterConfig(
            n_snapshots=16,
            starts=((0.0, 0.0, 1.0, 30e-9),),
            velocities=((0.25, 0.1, 0.0, 0.05e-9),),
            member_scatter_io=0.2,
            occlusions={0: tuple(range(5, 5 + gap))},
        )
        truth = gen_moving_cluster(config, seed=3)
        cfg = FilterConfig(n_th=n_th)
        return run_tracking(truth.snapshots, truth.observations, cfg)

    def test_gap_of_n_th_keeps_identity(self):
        result = self._run_with_gap(gap=5)
        assert len(result.summaries) == 1
        ids = {r.track_id for r in result.records}
        assert ids == {0}
        assert result.summaries[0]["death"] == 15

    def test_gap_of_n_th_plus_one_kills_track(self):
        result = self._run_with_gap(gap=6)
        assert len(result.summaries) == 2
        first = result.summaries[0]
        assert first["death"] == 4          # lifetime truncated to last seen
        assert first["lifetime"] == 5
        reborn = result.summaries[1]
        assert reborn["birth"] == 11

    def test_no_track_survives_beyond_threshold(self):
        result = self._run_with_gap(gap=6)
        by_track = {}
        for r in result.records:
            by_track.setdefault(r.track_id, []).append(r.status)
        for statuses in by_track.values():
            run = 0
            for s in statuses:
                run = run + 1 if s == "disappeared" else 0
                assert run <= 5

    def test_noiseless_convergence(self):
        config = MovingClusterConfig(
            n_snapshots=12,
            starts=((0.0, 0.0, 1.0, 30e-9),),
            velocities=((0.3, -0.2, 0.05, 0.02e-9),),
            member_scatter_io=0.05,
            member_scatter_tau=0.05e-9,
        )
        truth = gen_moving_cluster(config, seed=5)
        cfg = FilterConfig(q=np.zeros((8, 8)), r=1e-10 * np.eye(4))
        result = run_tracking(truth.snapshots, truth.observations, cfg)
        errors = []
        for r in result.records:
            true_c = truth.centroids[0, r.snapshot]
            got = np.array(r.centroid_external)
            errors.append(np.linalg.norm(got[:3] - true_c[:3]))
        # strictly decreasing position error over the first updates
        assert errors[1] <= errors[0] + 1e-12
        assert errors[3] <= errors[2] + 1e-12
        assert errors[-1] < 1e-3

    def test_track_output_records(self):
        truth = gen_moving_cluster(MovingClusterConfig(n_snapshots=6), seed=7)
        result = run_tracking(truth.snapshots, truth.observations, FilterConfig())
        assert result.records[0].status == "born"
        assert all(r.matched_cluster == 0 for r in result.records)
        assert (0, 0) in result.track_of_cluster
