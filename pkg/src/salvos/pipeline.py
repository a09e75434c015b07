"""
Clip-level orchestration of the full coarse-to-fine pipeline.

Per clip, the tracking/clustering branch and the supervoxel branch run
concurrently (deterministic join), their outputs fuse into a trimap, and
the graph-cut stage produces the final masks.
"""

import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coarse_fusion, media_io, motion_cluster, supervoxel, tracker
from .config import PipelineConfig
from .evaluate import xor_error
from .fine_seg import grabcut_iterate, _center_prior_trimap
from .coarse_fusion import UNDETERMINED, FOREGROUND
from .media_io import FrameVolume
from .preprocess import bilateral_filter, flow_volume, rgb_to_gray

log = logging.getLogger("salvos")


@dataclass
class PipelineResult:
    masks: np.ndarray
    stage_seconds: dict = field(default_factory=dict)
    trimap: np.ndarray = None
    warnings: list = field(default_factory=list)
    report: object = None


def _should_filter(config, width, height):
    mode = config.bilateral.mode
    if mode == "on":
        return True
    if mode == "off":
        return False
    return min(width, height) >= config.bilateral.hd_threshold


def _coarse_points(clip, config):
    """Tracking + motion clustering branch; returns labelled point samples."""
    tcfg = tracker.TrackingConfig(
        grid_interval=config.tracking.grid_interval,
        window_length=config.tracking.window_length,
        pyramid_levels=config.tracking.pyramid_levels,
        lk_window=config.tracking.lk_window,
        max_iterations=config.tracking.max_iterations,
        convergence_eps=config.tracking.convergence_eps,
        fb_threshold=config.tracking.fb_threshold,
    )
    windows = tracker.track_clip(clip, tcfg)
    motions, kept_windows, problems = [], [], []
    for start, n_frames, trajectories in windows:
        try:
            tm, motion = motion_cluster.cluster_window(
                trajectories, n_frames, k=config.ssc.k,
                lambda_rel=config.ssc.lambda_rel,
                admm_iterations=config.ssc.admm_iterations,
                motion_weight=config.ssc.motion_weight)
        except (motion_cluster.InsufficientDataError,
                motion_cluster.DegenerateAffinityError) as exc:
            problems.append("window at frame %d skipped: %s" % (start, exc))
            continue
        kept_windows.append((start, n_frames, trajectories))
        motions.append((tm, motion))
    points = coarse_fusion.points_from_windows(kept_windows, motions)
    return points, problems


def _supervoxels(clip, config):
    gray = rgb_to_gray(clip.rgb)
    flow = flow_volume(gray, alpha=config.flow.alpha,
                       iterations=config.flow.iterations,
                       levels=config.flow.levels)
    params = supervoxel.SlicParams(
        n=config.slic.n, depth=config.slic.depth, m=config.slic.m,
        w_m=config.slic.w_m, w_z=config.slic.w_z, w_L=config.slic.w_L,
        frame_rate=config.frame_rate, iterations=config.slic.iterations,
        min_size_fraction=config.slic.min_size_fraction)
    return supervoxel.segment_supervoxels(clip, flow, params)


def _fine_masks(clip, trimap, config):
    depth = trimap.shape[0]
    notes = []

    def one_frame(t):
        tri = trimap[t]
        if not (tri != UNDETERMINED).any():
            notes.append("frame %d trimap all undetermined; center prior" % t)
            tri = _center_prior_trimap(*tri.shape)
        mask, info = grabcut_iterate(clip.rgb[t], tri, k=config.grabcut.k,
                                     gamma=config.grabcut.gamma,
                                     max_iters=config.grabcut.max_iters)
        notes.extend(info["warnings"])
        return mask

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            frames = list(pool.map(one_frame, range(depth)))
    else:
        frames = [one_frame(t) for t in range(depth)]
    return np.stack(frames), notes


def process_clip(clip, config):
    """Run all stages on one FrameVolume; returns (masks, trimap, timings, notes)."""
    notes = []
    timings = {}

    if _should_filter(config, clip.width, clip.height):
        t0 = time.perf_counter()
        filtered = np.stack([
            bilateral_filter(clip.rgb[t], config.bilateral.sigma_spatial,
                             config.bilateral.sigma_range)
            for t in range(clip.depth)])
        clip = FrameVolume(filtered, frame_rate=clip.frame_rate)
        timings["bilateral"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fut_points = pool.submit(_coarse_points, clip, config)
            fut_voxels = pool.submit(_supervoxels, clip, config)
            (points, problems) = fut_points.result()
            labels = fut_voxels.result()
    else:
        points, problems = _coarse_points(clip, config)
        labels = _supervoxels(clip, config)
    notes.extend(problems)
    timings["coarse"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if points:
        trimap = coarse_fusion.fuse(labels, points)
    else:
        notes.append("no labelled tracking points; trimap all undetermined")
        trimap = np.full(labels.labels.shape, UNDETERMINED, dtype=np.uint8)
    timings["fusion"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    masks, fine_notes = _fine_masks(clip, trimap, config)
    notes.extend(fine_notes)
    timings["fine"] = time.perf_counter() - t0
    return masks, trimap, timings, notes


def run_pipeline(input_dir, output_dir, config=None, truth_dir=None,
                 debug_dir=None, name=None):
    """Full pipeline over a frame directory; writes masks to output_dir.

    Returns a PipelineResult; the report field is filled when truth_dir is
    given.
    """
    config = config or PipelineConfig()
    volume = media_io.load_clip(input_dir, frame_rate=config.frame_rate)
    ranges = media_io.split_into_clips(volume.depth, config.clip_size)

    all_masks = []
    all_trimaps = []
    stage_seconds = {}
    notes = []
    for start, stop in ranges:
        clip = FrameVolume(volume.rgb[start:stop], frame_rate=config.frame_rate)
        masks, trimap, timings, clip_notes = process_clip(clip, config)
        all_masks.append(masks)
        all_trimaps.append(trimap)
        notes.extend(clip_notes)
        for key, value in timings.items():
            stage_seconds[key] = stage_seconds.get(key, 0.0) + value
        log.info("clip %d..%d done: %s", start, stop - 1,
                 ", ".join("%s %.2fs" % kv for kv in timings.items()))

    masks = np.concatenate(all_masks)
    trimap = np.concatenate(all_trimaps)
    if output_dir:
        media_io.write_mask(masks, output_dir)
    if debug_dir:
        media_io.write_trimap(trimap, os.path.join(debug_dir, "trimap"))
        media_io.write_overlay(volume, masks, os.path.join(debug_dir, "overlay"))

    result = PipelineResult(masks=masks, stage_seconds=stage_seconds,
                            trimap=trimap, warnings=notes)
    if truth_dir:
        truth = media_io.read_ground_truth(truth_dir)
        result.report = xor_error(masks, truth,
                                  name=name or os.path.basename(os.path.normpath(input_dir)))
        result.report.stage_runtimes = dict(stage_seconds)
    return result
