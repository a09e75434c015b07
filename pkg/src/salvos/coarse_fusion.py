"""
Coarse trimap from motion-labelled tracking points and supervoxels.

Per supervoxel: all contained points background -> 0, all foreground -> 1,
mixed or no points at all -> 2 (undetermined, left to the fine stage).
"""

import numpy as np

BACKGROUND, FOREGROUND, UNDETERMINED = 0, 1, 2


def points_from_windows(windows, motions):
    """Flatten tracked windows into (frame, x, y, is_foreground) samples.

    windows is the output of tracker.track_clip; motions pairs each window
    with its (TrajectoryMatrix, MotionLabels) clustering result.
    """
    samples = []
    for (start, n_frames, trajectories), (tm, motion) in zip(windows, motions):
        fg = motion.foreground
        for col, traj_idx in enumerate(tm.trajectory_ids):
            traj = trajectories[traj_idx]
            for t in range(n_frames):
                if t < len(traj.alive) and traj.alive[t]:
                    x, y = traj.positions[t]
                    samples.append((start + t, x, y, bool(fg[col])))
    return samples


def fuse(label_volume, points):
    """Build a per-frame trimap from supervoxel labels and labelled points.

    points: iterable of (frame, x, y, is_foreground) tuples; positions are
    rounded to the nearest voxel.
    """
    labels = label_volume.labels if hasattr(label_volume, "labels") else np.asarray(label_volume)
    depth, h, w = labels.shape
    num_labels = int(labels.max()) + 1
    has_fg = np.zeros(num_labels, dtype=bool)
    has_bg = np.zeros(num_labels, dtype=bool)
    n_points = 0
    for frame, x, y, is_fg in points:
        t = int(frame)
        xi = int(round(x))
        yi = int(round(y))
        if 0 <= t < depth and 0 <= yi < h and 0 <= xi < w:
            lab = labels[t, yi, xi]
            if is_fg:
                has_fg[lab] = True
            else:
                has_bg[lab] = True
            n_points += 1
    if n_points == 0:
        raise ValueError("no tracking points fall inside the volume")
    code = np.full(num_labels, UNDETERMINED, dtype=np.uint8)
    code[has_bg & ~has_fg] = BACKGROUND
    code[has_fg & ~has_bg] = FOREGROUND
    return code[labels]


def trimap_stats(trimap):
    """Fractions of (background, foreground, undetermined) voxels."""
    trimap = np.asarray(trimap)
    total = trimap.size
    return tuple(float((trimap == c).sum()) / total
                 for c in (BACKGROUND, FOREGROUND, UNDETERMINED))
