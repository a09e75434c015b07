"""
Motion grouping of point trajectories.

Trajectories surviving a full tracking window are stacked into columns,
expressed sparsely in terms of each other (an L1 self-representation solved
by ADMM), turned into a symmetric affinity, and split by spectral
clustering.  The cluster that best matches a single global translation is
designated background; everything else is foreground.
"""

from dataclasses import dataclass

import numpy as np

from .kmeans import lloyd


class InsufficientDataError(Exception):
    """Too few surviving trajectories to cluster."""


class DegenerateAffinityError(Exception):
    """Affinity carries no usable structure (all zero)."""


@dataclass
class TrajectoryMatrix:
    matrix: np.ndarray          # (2F, N), per-coordinate mean removed
    positions: np.ndarray       # (N, F, 2) raw tracked positions
    trajectory_ids: list        # index into the source trajectory list
    excluded_ids: list


@dataclass
class SparseCodes:
    codes: np.ndarray           # (N, N), zero diagonal
    residuals: np.ndarray       # per-column squared representation error
    converged: bool


@dataclass
class MotionLabels:
    labels: np.ndarray          # per-trajectory cluster id
    background_cluster: int = -1

    @property
    def foreground(self):
        """Boolean foreground flag per trajectory."""
        return self.labels != self.background_cluster


def build_trajectory_matrix(trajectories, window_frames, min_columns=3,
                            motion_weight=3.0):
    """Stack fully-surviving trajectories into a (2F, N) matrix.

    Each column is (x_1, y_1, ..., x_F, y_F); every coordinate row is
    mean-centered across columns.  Each column's deviation from its own
    temporal mean is then amplified by motion_weight, which emphasises the
    motion component over the (much larger) static position offsets so
    that differently-moving groups end up in clearly distinct subspaces.
    motion_weight=1 keeps plain mean-centered positions.
    """
    kept, excluded = [], []
    for idx, traj in enumerate(trajectories):
        if traj.alive_through(window_frames):
            kept.append(idx)
        else:
            excluded.append(idx)
    if len(kept) < min_columns:
        raise InsufficientDataError(
            "only %d of %d trajectories survive the window (need >= %d)"
            % (len(kept), len(trajectories), min_columns))
    positions = np.array(
        [[trajectories[i].positions[t] for t in range(window_frames)] for i in kept])
    matrix = positions.reshape(len(kept), -1).T.astype(np.float64)
    matrix = matrix - matrix.mean(axis=1, keepdims=True)
    if motion_weight != 1.0:
        coords = matrix.reshape(window_frames, 2, -1)
        temporal_mean = coords.mean(axis=0, keepdims=True)
        coords = temporal_mean + motion_weight * (coords - temporal_mean)
        matrix = coords.reshape(2 * window_frames, -1)
    return TrajectoryMatrix(matrix=matrix, positions=positions,
                            trajectory_ids=kept, excluded_ids=excluded)


def ssc_sparse_codes(Y, lambda_rel=20.0, admm_iterations=200, rho=None, tol=1e-8):
    """Sparse self-representation of the columns of Y.

    For each column y_i, minimizes  lambda_i ||y_i - Y c_i||^2 + ||c_i||_1
    subject to c_ii = 0, with lambda_i = lambda_rel / mu_i and
    mu_i = max_{j != i} |y_i^T y_j|.  Solved for all columns at once by
    ADMM; the per-column linear systems use the d x d Gram of the rows
    (d = 2F is small), so each update is cheap.
    """
    if isinstance(Y, TrajectoryMatrix):
        Y = Y.matrix
    Y = np.asarray(Y, dtype=np.float64)
    d, n = Y.shape
    if n < 2:
        raise InsufficientDataError("need at least 2 columns, got %d" % n)

    G = Y.T @ Y                               # (N, N)
    mu = np.abs(G - np.diag(np.diag(G))).max(axis=0)
    lam = lambda_rel / np.maximum(mu, 1e-12)
    lam = np.minimum(lam, 1e8)
    if rho is None:
        rho = 1.0

    a = 2.0 * lam                             # per-column data weight
    # When 2 lam_i mu_i <= 1 the zero code is exactly optimal (every
    # correlation sits below the L1 threshold); solve those columns in
    # closed form instead of grinding the (ill-conditioned) iteration.
    a = np.where(2.0 * lam * mu <= 1.0, 0.0, a)
    YYt = Y @ Y.T                             # (d, d)
    # Woodbury: (a G + rho I)^-1 b = (b - a Y^T M (Y b)) / rho,
    # M = (rho I_d + a Y Y^T)^-1, precomputed per column.
    M = np.linalg.inv(rho * np.eye(d)[None, :, :] + a[:, None, None] * YYt[None, :, :])

    Z = np.zeros((n, n))
    U = np.zeros((n, n))
    C = np.zeros((n, n))
    converged = False
    for _ in range(admm_iterations):
        B = a[None, :] * G + rho * (Z - U)    # column i RHS in column i
        YB = Y @ B                            # (d, N)
        T = np.einsum("ijk,ki->ji", M, YB)    # (d, N): T[:, i] = M_i @ YB[:, i]
        C = (B - Y.T @ (a[None, :] * T)) / rho
        V = C + U
        Z_prev = Z
        Z = np.sign(V) * np.maximum(np.abs(V) - 1.0 / rho, 0.0)
        np.fill_diagonal(Z, 0.0)
        U = U + C - Z
        primal = np.abs(C - Z).max()
        dual = rho * np.abs(Z - Z_prev).max()
        if max(primal, dual) < tol:
            converged = True
            break
    if not converged:
        import warnings
        warnings.warn("sparse coding ADMM did not converge to %.1e" % tol)
    residuals = ((Y - Y @ Z) ** 2).sum(axis=0)
    return SparseCodes(codes=Z, residuals=residuals, converged=converged)


def build_affinity(codes):
    """Symmetric affinity W = |C| + |C|^T with columns pre-normalized to max 1."""
    C = codes.codes if isinstance(codes, SparseCodes) else np.asarray(codes)
    A = np.abs(C)
    col_max = A.max(axis=0)
    A = A / np.maximum(col_max, 1e-300)[None, :]
    return A + A.T


def spectral_cluster(W, k=2):
    """Normalized-cut spectral clustering of a symmetric affinity matrix."""
    W = np.asarray(W, dtype=np.float64)
    if k < 2:
        raise ValueError("k must be >= 2")
    degrees = W.sum(axis=1)
    if not degrees.any():
        raise DegenerateAffinityError("affinity matrix is all zero")
    inv_sqrt = 1.0 / np.sqrt(np.maximum(degrees, 1e-12))
    L = np.eye(len(W)) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    eigvals, eigvecs = np.linalg.eigh(L)
    emb = eigvecs[:, :k]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = emb / np.maximum(norms, 1e-12)
    labels, _ = lloyd(emb, k)
    return labels


def select_foreground(labels, positions, tie_slack=0.05):
    """Mark the background cluster; everything else is foreground.

    The background is the cluster whose per-frame displacements best fit a
    single global translation (lowest mean squared residual against the
    cluster-mean displacement field).  Clusters whose residual is within
    2x of the best one (plus a small absolute slack for the noise-free
    case) count as tied and the most populous of them wins.
    """
    labels = np.asarray(labels)
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 3:
        raise ValueError("positions must have shape (N, F, 2)")
    disp = positions[:, 1:, :] - positions[:, :-1, :]
    cluster_ids = np.unique(labels)
    if len(cluster_ids) < 2:
        raise ValueError("need at least 2 clusters")
    residuals, sizes = {}, {}
    for cid in cluster_ids:
        member_disp = disp[labels == cid]
        mean_field = member_disp.mean(axis=0)
        residuals[cid] = float(((member_disp - mean_field) ** 2).mean())
        sizes[cid] = int((labels == cid).sum())
    r_min = min(residuals.values())
    cutoff = max(2.0 * r_min, r_min + tie_slack)
    candidates = [cid for cid in cluster_ids if residuals[cid] <= cutoff]
    background = min(candidates, key=lambda cid: (-sizes[cid], residuals[cid], cid))
    return MotionLabels(labels=labels, background_cluster=int(background))


def demote_inconsistent_foreground(motion, positions, speed_ratio=0.25,
                                   noise_factor=4.0, floor=0.25):
    """Reassign foreground trajectories that do not share their cluster's motion.

    Seeds straddling the object boundary get partially dragged by the
    tracker: they end up in a moving cluster although their own displacement
    is neither the cluster's nor the background's.  For each foreground
    cluster, members whose mean squared displacement residual against the
    cluster's median displacement field exceeds
    max(speed_ratio * cluster speed^2, noise_factor * background residual
    + floor) are demoted to the background cluster.  Labels are modified in
    place and returned.
    """
    labels = motion.labels
    positions = np.asarray(positions, dtype=np.float64)
    disp = positions[:, 1:, :] - positions[:, :-1, :]
    bg = labels == motion.background_cluster
    if bg.any():
        bg_field = np.median(disp[bg], axis=0)
        bg_resid = float(((disp[bg] - bg_field) ** 2).sum(axis=2).mean())
    else:
        bg_resid = 0.0
    for cid in np.unique(labels):
        if cid == motion.background_cluster:
            continue
        members = np.where(labels == cid)[0]
        field = np.median(disp[members], axis=0)
        speed2 = float((field ** 2).sum(axis=1).mean())
        cutoff = max(speed_ratio * speed2, noise_factor * bg_resid + floor)
        for i in members:
            resid = float(((disp[i] - field) ** 2).sum(axis=1).mean())
            if resid > cutoff:
                labels[i] = motion.background_cluster
    return motion


def cluster_window(trajectories, window_frames, k=2, lambda_rel=20.0,
                   admm_iterations=200, motion_weight=3.0):
    """Full motion-clustering chain for one tracking window.

    Returns (TrajectoryMatrix, MotionLabels); with k > 2 all non-background
    clusters are treated as foreground by the MotionLabels flags.
    """
    tm = build_trajectory_matrix(trajectories, window_frames, min_columns=k + 1,
                                 motion_weight=motion_weight)
    codes = ssc_sparse_codes(tm, lambda_rel=lambda_rel, admm_iterations=admm_iterations)
    W = build_affinity(codes)
    labels = spectral_cluster(W, k=k)
    motion = select_foreground(labels, tm.positions)
    return tm, demote_inconsistent_foreground(motion, tm.positions)
