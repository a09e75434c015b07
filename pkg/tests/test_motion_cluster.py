import itertools
import warnings

import numpy as np
import pytest

from salvos.motion_cluster import (DegenerateAffinityError,
                                   InsufficientDataError, build_affinity,
                                   build_trajectory_matrix, cluster_window,
                                   demote_inconsistent_foreground,
                                   select_foreground, spectral_cluster,
                                   ssc_sparse_codes)
from salvos.tracker import Trajectory


def _traj(points):
    points = [tuple(p) for p in points]
    return Trajectory(seed=points[0], window_start=0, positions=points,
                      alive=[True] * len(points))


def _static(p, frames, rng=None, noise=0.0):
    return _moving(p, (0.0, 0.0), frames, rng, noise)


def _moving(p, v, frames, rng=None, noise=0.0):
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    pts = []
    for t in range(frames):
        q = p + v * t
        if noise:
            q = q + rng.normal(0.0, noise, 2)
        pts.append(tuple(q))
    return _traj(pts)


def _grid_scene(noise=0.0, seed=0, speed=(2.0, 0.0), object_cells=2, frames=6):
    """10x10 seed grid on a 100x100 frame; an object_cells^2 block translates."""
    rng = np.random.default_rng(seed)
    trajs, truth = [], []
    hi = 40 + object_cells * 10
    for gy in range(10):
        for gx in range(10):
            p = (gx * 10 + 5.0, gy * 10 + 5.0)
            if 40 <= p[0] < hi and 40 <= p[1] < hi:
                continue
            trajs.append(_static(p, frames, rng, noise))
            truth.append(False)
    for gy in range(object_cells):
        for gx in range(object_cells):
            trajs.append(_moving((45.0 + gx * 10, 45.0 + gy * 10), speed,
                                 frames, rng, noise))
            truth.append(True)
    return trajs, np.array(truth)


class TestBuildTrajectoryMatrix:
    def test_matrix_dimensions(self):
        trajs = [_static((i, i), 5) for i in range(100)]
        for t in trajs[90:]:
            t.alive[-1] = False
        tm = build_trajectory_matrix(trajs, 5)
        assert tm.matrix.shape == (10, 90)
        assert tm.trajectory_ids == list(range(90))
        assert tm.excluded_ids == list(range(90, 100))

    def test_all_lost_raises(self):
        trajs = [_static((i, i), 4) for i in range(5)]
        for t in trajs:
            t.alive[2] = False
        with pytest.raises(InsufficientDataError):
            build_trajectory_matrix(trajs, 4)

    def test_rows_are_mean_centered(self):
        rng = np.random.default_rng(0)
        trajs = [_moving(rng.uniform(0, 50, 2), rng.uniform(-1, 1, 2), 4)
                 for _ in range(8)]
        tm = build_trajectory_matrix(trajs, 4, motion_weight=1.0)
        assert np.allclose(tm.matrix.mean(axis=1), 0.0, atol=1e-9)

    def test_two_point_groups_are_rank_one(self):
        # 50 copies of a static point and 50 of a translating one: after
        # centering each group's columns are scalar multiples of one vector
        trajs = ([_static((10.0, 20.0), 4) for _ in range(50)] +
                 [_moving((60.0, 30.0), (2.0, 1.0), 4) for _ in range(50)])
        tm = build_trajectory_matrix(trajs, 4)
        assert np.linalg.matrix_rank(tm.matrix[:, :50], tol=1e-8) == 1
        assert np.linalg.matrix_rank(tm.matrix[:, 50:], tol=1e-8) == 1

    def test_motion_weight_amplifies_temporal_deviation_only(self):
        trajs = [_static((5.0, 5.0), 3), _moving((20.0, 10.0), (1.0, 0.0), 3),
                 _static((40.0, 30.0), 3)]
        plain = build_trajectory_matrix(trajs, 3, motion_weight=1.0).matrix
        boosted = build_trajectory_matrix(trajs, 3, motion_weight=4.0).matrix
        coords_p = plain.reshape(3, 2, -1)
        coords_b = boosted.reshape(3, 2, -1)
        # per-column temporal means agree; deviations scale by the weight
        assert np.allclose(coords_p.mean(axis=0), coords_b.mean(axis=0))
        dev_p = coords_p - coords_p.mean(axis=0, keepdims=True)
        dev_b = coords_b - coords_b.mean(axis=0, keepdims=True)
        assert np.allclose(dev_b, 4.0 * dev_p)

    def test_min_columns_enforced(self):
        trajs = [_static((i, i), 3) for i in range(4)]
        with pytest.raises(InsufficientDataError):
            build_trajectory_matrix(trajs, 3, min_columns=5)


class TestSscSparseCodes:
    def test_identical_columns_near_unit_weight(self):
        y = np.array([[3.0], [4.0], [1.0], [2.0]])
        Y = np.hstack([y, y])
        codes = ssc_sparse_codes(Y, lambda_rel=2e4, admm_iterations=2000,
                                 tol=1e-12)
        assert codes.codes[1, 0] == pytest.approx(1.0, abs=1e-3)
        assert codes.residuals[0] < 1e-6

    def test_diagonal_identically_zero(self):
        rng = np.random.default_rng(3)
        Y = rng.standard_normal((6, 12))
        codes = ssc_sparse_codes(Y, admm_iterations=50)
        assert np.array_equal(np.diag(codes.codes), np.zeros(12))

    def test_orthogonal_subspaces_have_no_cross_coefficients(self):
        u = np.array([1.0, 0.0, 0.0, 0.0])
        v = np.array([0.0, 0.0, 1.0, 0.0])
        Y = np.column_stack([a * u for a in (1.0, 2.0, -1.5, 0.7)] +
                            [b * v for b in (1.2, -2.0, 0.5, 3.0)])
        codes = ssc_sparse_codes(Y, lambda_rel=2e4, admm_iterations=5000,
                                 tol=1e-12)
        C = np.abs(codes.codes)
        assert C[4:, :4].max() < 1e-6
        assert C[:4, 4:].max() < 1e-6
        # within-subspace representation really does explain each column
        assert codes.residuals.max() < 1e-6

    def test_orthogonal_outlier_gets_zero_code(self):
        rng = np.random.default_rng(5)
        base = rng.standard_normal((6, 2))
        Y = np.hstack([base @ rng.standard_normal((2, 8)),
                       np.zeros((6, 1))])
        outlier = np.zeros(6)
        outlier[:] = np.linalg.svd(Y[:, :8])[0][:, -1]  # orthogonal direction
        Y[:, 8] = 2.0 * outlier
        codes = ssc_sparse_codes(Y, admm_iterations=800)
        assert np.abs(codes.codes[:, 8]).max() < 1e-6
        assert codes.residuals[8] == pytest.approx(4.0, rel=1e-6)

    def test_single_column_rejected(self):
        with pytest.raises(InsufficientDataError):
            ssc_sparse_codes(np.ones((4, 1)))

    def test_nonconvergence_warns_but_returns(self):
        rng = np.random.default_rng(7)
        Y = rng.standard_normal((4, 10))
        with pytest.warns(UserWarning):
            codes = ssc_sparse_codes(Y, admm_iterations=1, tol=1e-15)
        assert codes.codes.shape == (10, 10)
        assert not codes.converged


class TestBuildAffinity:
    def test_zero_codes_zero_affinity(self):
        assert np.array_equal(build_affinity(np.zeros((5, 5))), np.zeros((5, 5)))

    def test_block_structure_preserved(self):
        C = np.zeros((6, 6))
        C[0, 1] = C[1, 0] = 0.5
        C[4, 5] = 0.25
        W = build_affinity(C)
        nz = W != 0
        expected = np.zeros((6, 6), dtype=bool)
        expected[0, 1] = expected[1, 0] = True
        expected[4, 5] = expected[5, 4] = True
        assert np.array_equal(nz, expected)

    def test_symmetric_for_random_codes(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            C = rng.standard_normal((8, 8))
            np.fill_diagonal(C, 0.0)
            W = build_affinity(C)
            assert np.array_equal(W, W.T)
            assert (W >= 0).all()

    def test_columns_normalized_before_symmetrizing(self):
        C = np.zeros((3, 3))
        C[1, 0] = 10.0
        C[2, 0] = 5.0
        W = build_affinity(C)
        assert W[1, 0] == pytest.approx(1.0)
        assert W[2, 0] == pytest.approx(0.5)


def _purity(labels, truth):
    """Best accuracy over all relabelings."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    ids = np.unique(truth)
    best = 0.0
    for perm in itertools.permutations(np.unique(labels)):
        mapping = dict(zip(perm, ids))
        mapped = np.array([mapping.get(l, -1) for l in labels])
        best = max(best, (mapped == truth).mean())
    return best


class TestSpectralCluster:
    def test_two_disconnected_blocks(self):
        W = np.zeros((7, 7))
        W[:4, :4] = 1.0
        W[4:, 4:] = 1.0
        np.fill_diagonal(W, 0.0)
        labels = spectral_cluster(W, 2)
        truth = np.array([0] * 4 + [1] * 3)
        assert _purity(labels, truth) == 1.0

    def test_three_blocks_recovered(self):
        rng = np.random.default_rng(2)
        sizes = [4, 5, 3]
        truth = np.repeat(np.arange(3), sizes)
        n = sum(sizes)
        W = np.zeros((n, n))
        for c in range(3):
            idx = np.flatnonzero(truth == c)
            for i in idx:
                for j in idx:
                    if i != j:
                        W[i, j] = 0.5 + 0.5 * rng.random()
        labels = spectral_cluster(W, 3)
        assert _purity(labels, truth) == 1.0

    def test_uniform_affinity_terminates_with_two_groups(self):
        W = np.ones((8, 8)) - np.eye(8)
        labels = spectral_cluster(W, 2)
        assert set(labels) <= {0, 1}
        assert len(labels) == 8

    def test_scaling_invariance(self):
        rng = np.random.default_rng(9)
        C = np.abs(rng.standard_normal((10, 10)))
        W = C + C.T
        np.fill_diagonal(W, 0.0)
        assert np.array_equal(spectral_cluster(W, 2), spectral_cluster(10.0 * W, 2))

    def test_all_zero_affinity_rejected(self):
        with pytest.raises(DegenerateAffinityError):
            spectral_cluster(np.zeros((5, 5)), 2)

    def test_k_below_two_rejected(self):
        with pytest.raises(ValueError):
            spectral_cluster(np.eye(4), 1)


class TestSelectForeground:
    def test_static_majority_is_background(self):
        trajs = ([_static((i, 0.0), 3) for i in range(9)] +
                 [_moving((50.0, 50.0), (3.0, 0.0), 3)])
        positions = np.array([t.positions for t in trajs])
        labels = np.array([0] * 9 + [1])
        motion = select_foreground(labels, positions)
        assert motion.background_cluster == 0
        assert motion.foreground.tolist() == [False] * 9 + [True]

    def test_zero_variance_cluster_wins_at_equal_size(self):
        rng = np.random.default_rng(4)
        wobbly = [_moving((10.0 * i, 0.0), (1.0, 0.0), 4, rng, 1.5)
                  for i in range(5)]
        steady = [_static((0.0, 10.0 * i), 4) for i in range(5)]
        trajs = wobbly + steady
        positions = np.array([t.positions for t in trajs])
        labels = np.array([0] * 5 + [1] * 5)
        motion = select_foreground(labels, positions)
        assert motion.background_cluster == 1

    def test_panning_camera_larger_uniform_cluster_is_background(self):
        pan = (1.0, 0.5)
        trajs = ([_moving((5.0 * i, 3.0 * i), pan, 4) for i in range(12)] +
                 [_moving((40.0, 40.0 + 5 * j), (3.0, -1.0), 4) for j in range(3)])
        positions = np.array([t.positions for t in trajs])
        labels = np.array([0] * 12 + [1] * 3)
        motion = select_foreground(labels, positions)
        assert motion.background_cluster == 0
        assert motion.foreground.sum() == 3

    def test_single_cluster_rejected(self):
        positions = np.zeros((4, 3, 2))
        with pytest.raises(ValueError):
            select_foreground(np.zeros(4, dtype=int), positions)


class TestDemoteInconsistentForeground:
    def _motion(self, labels, background=0):
        from salvos.motion_cluster import MotionLabels
        return MotionLabels(labels=np.asarray(labels), background_cluster=background)

    def test_dragged_member_demoted(self):
        # 5 steady movers, 1 member that creeps half a step then freezes
        movers = [_moving((10.0 * i, 0.0), (2.0, 0.0), 6) for i in range(5)]
        dragged = _traj([(50.0, 20.0), (50.5, 20.0), (50.5, 20.0),
                         (50.5, 20.0), (50.5, 20.0), (50.5, 20.0)])
        static = [_static((5.0 * i, 40.0), 6) for i in range(6)]
        positions = np.array([t.positions for t in static + movers + [dragged]])
        motion = self._motion([0] * 6 + [1] * 6)
        demote_inconsistent_foreground(motion, positions)
        assert (motion.labels[:6] == 0).all()
        assert (motion.labels[6:11] == 1).all()
        assert motion.labels[11] == 0

    def test_consistent_foreground_untouched(self):
        movers = [_moving((10.0 * i, 0.0), (2.0, 0.0), 6) for i in range(4)]
        static = [_static((5.0 * i, 40.0), 6) for i in range(6)]
        positions = np.array([t.positions for t in static + movers])
        motion = self._motion([0] * 6 + [1] * 4)
        demote_inconsistent_foreground(motion, positions)
        assert (motion.labels == [0] * 6 + [1] * 4).all()

    def test_noisy_but_consistent_foreground_kept(self):
        rng = np.random.default_rng(4)
        positions = []
        for i in range(8):
            base = _static((6.0 * i, 30.0), 6).positions
            positions.append(np.asarray(base) + rng.normal(0, 0.5, (6, 2)))
        for i in range(4):
            base = _moving((10.0 * i, 0.0), (2.0, 0.0), 6).positions
            positions.append(np.asarray(base) + rng.normal(0, 0.5, (6, 2)))
        motion = self._motion([0] * 8 + [1] * 4)
        demote_inconsistent_foreground(motion, np.array(positions))
        assert (motion.labels == [0] * 8 + [1] * 4).all()


class TestClusterWindowEndToEnd:
    def test_noise_free_scene_fully_correct(self):
        trajs, truth = _grid_scene(noise=0.0)
        _, motion = cluster_window(trajs, 6)
        assert (motion.foreground == truth).mean() == 1.0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_noisy_scene_mostly_correct(self, seed):
        trajs, truth = _grid_scene(noise=0.5, seed=seed)
        _, motion = cluster_window(trajs, 6)
        assert (motion.foreground == truth).mean() >= 0.95

    def test_larger_object_noisy(self):
        trajs, truth = _grid_scene(noise=0.5, seed=3, object_cells=3)
        _, motion = cluster_window(trajs, 6)
        assert (motion.foreground == truth).mean() >= 0.95

    def test_cross_group_coefficient_mass_small(self):
        trajs, truth = _grid_scene(noise=0.0)
        tm = build_trajectory_matrix(trajs, 6)
        codes = ssc_sparse_codes(tm.matrix, admm_iterations=300)
        C = np.abs(codes.codes)
        cross = C[truth][:, ~truth].sum() + C[~truth][:, truth].sum()
        assert cross / max(C.sum(), 1e-12) < 0.01

    def test_too_few_trajectories(self):
        trajs = [_static((0.0, 0.0), 6), _static((5.0, 5.0), 6)]
        with pytest.raises(InsufficientDataError):
            cluster_window(trajs, 6)
