"""
Grid-seeded pyramidal KLT point tracking over fixed-length windows.

Points are seeded on a regular grid, tracked frame to frame with pyramidal
Lucas-Kanade, and marked lost when the solver fails, the point leaves the
frame, or the forward-backward error exceeds a threshold.  Loss is sticky
for the remainder of the window.
"""

from dataclasses import dataclass, field

import cv2
import numpy as np

from .preprocess import rgb_to_gray


@dataclass
class TrackingConfig:
    grid_interval: int = 10
    window_length: int = 5
    pyramid_levels: int = 3
    lk_window: int = 9
    max_iterations: int = 30
    convergence_eps: float = 0.01
    fb_threshold: float = 1.5

    def __post_init__(self):
        if self.grid_interval < 2:
            raise ValueError("grid_interval must be >= 2")
        if self.window_length < 2:
            raise ValueError("window_length must be >= 2")


@dataclass
class Trajectory:
    seed: tuple
    window_start: int
    positions: list = field(default_factory=list)
    alive: list = field(default_factory=list)

    def alive_through(self, length):
        """True if the point survived the first `length` frames of the window."""
        return len(self.alive) >= length and all(self.alive[:length])


def seed_grid(frame_dims, grid_interval):
    """Grid seed points (x, y) at cell centres, strictly inside the frame.

    frame_dims is (width, height).
    """
    if grid_interval < 2:
        raise ValueError("grid_interval must be >= 2")
    width, height = frame_dims
    half = grid_interval / 2.0
    # One point per complete grid cell, at the cell centre.
    xs = [i * grid_interval + half for i in range(width // grid_interval)]
    ys = [j * grid_interval + half for j in range(height // grid_interval)]
    return [(float(x), float(y)) for y in ys for x in xs]


def reacquire_schedule(total_frames, window_length):
    """Window start indices so that every frame pair is covered.

    Each window tracks frames start..start+window_length inclusive where
    possible, so consecutive windows overlap by one frame.  A final window
    that would cover fewer than 2 frames is merged into the previous one.
    """
    if window_length < 2:
        raise ValueError("window_length must be >= 2")
    starts = list(range(0, max(total_frames - 1, 1), window_length))
    if len(starts) > 1 and total_frames - starts[-1] < 2:
        starts.pop()
    return starts


def _to_u8(gray):
    return np.clip(gray * 255.0, 0, 255).astype(np.uint8)


def track_window(volume, seeds, config, window_start=0):
    """Track seed points through one window of a FrameVolume.

    Returns one Trajectory per seed.  positions[0] is the seed; each
    subsequent entry is the tracked position in the next frame of the
    window (or the last alive position once lost).
    """
    depth = volume.depth
    window_end = min(window_start + config.window_length + 1, depth)
    n_frames = window_end - window_start
    if n_frames < 2:
        raise ValueError("window must cover at least 2 frames")

    gray = [_to_u8(rgb_to_gray(volume.rgb[t])) for t in range(window_start, window_end)]
    h, w = gray[0].shape
    lk_params = dict(
        winSize=(config.lk_window, config.lk_window),
        maxLevel=config.pyramid_levels - 1,
        criteria=(cv2.TERM_CRITERIA_COUNT | cv2.TERM_CRITERIA_EPS,
                  config.max_iterations, config.convergence_eps),
    )

    trajectories = [Trajectory(seed=s, window_start=window_start,
                               positions=[s], alive=[True]) for s in seeds]
    pts = np.array(seeds, dtype=np.float32).reshape(-1, 1, 2)
    active = np.ones(len(seeds), dtype=bool)

    for t in range(n_frames - 1):
        if active.any():
            nxt, status, _ = cv2.calcOpticalFlowPyrLK(gray[t], gray[t + 1], pts, None, **lk_params)
            back, bstatus, _ = cv2.calcOpticalFlowPyrLK(gray[t + 1], gray[t], nxt, None, **lk_params)
            fb_err = np.linalg.norm((back - pts).reshape(-1, 2), axis=1)
            ok = (status.ravel() == 1) & (bstatus.ravel() == 1) & (fb_err <= config.fb_threshold)
            xy = nxt.reshape(-1, 2)
            inside = (xy[:, 0] >= 0) & (xy[:, 0] <= w - 1) & (xy[:, 1] >= 0) & (xy[:, 1] <= h - 1)
            ok &= inside
        else:
            nxt = pts
            ok = np.zeros(len(seeds), dtype=bool)
        active = active & ok
        for i, traj in enumerate(trajectories):
            if active[i]:
                traj.positions.append((float(nxt[i, 0, 0]), float(nxt[i, 0, 1])))
                traj.alive.append(True)
            else:
                traj.positions.append(traj.positions[-1])
                traj.alive.append(False)
        pts = np.where(active[:, None, None], nxt, pts).astype(np.float32)

    return trajectories


def track_clip(volume, config):
    """Run grid-seeded tracking over every reacquisition window of a clip.

    Returns a list of (window_start, window_frame_count, trajectories).
    """
    starts = reacquire_schedule(volume.depth, config.window_length)
    seeds = seed_grid((volume.width, volume.height), config.grid_interval)
    windows = []
    for start in starts:
        trajectories = track_window(volume, seeds, config, window_start=start)
        n_frames = len(trajectories[0].positions) if trajectories else 0
        windows.append((start, n_frames, trajectories))
    return windows
