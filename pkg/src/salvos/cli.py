"""
Command-line front end.

Subcommands run the whole pipeline or individual stages on local frame
directories.  Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal
error.
"""

import logging
import os
import sys

import click
import numpy as np
from PIL import Image, ImageDraw

from . import media_io, supervoxel, tracker
from .config import PipelineConfig, load_config
from .evaluate import report_table, xor_error
from .motion_cluster import DegenerateAffinityError, InsufficientDataError
from .pipeline import run_pipeline, _coarse_points, _supervoxels, process_clip
from .synthetic import SceneSpec, write_synthetic

DATA_ERRORS = (media_io.ClipError, InsufficientDataError,
               DegenerateAffinityError, FileNotFoundError, NotADirectoryError)


def _build_config(config_path, sets):
    config = load_config(config_path) if config_path else PipelineConfig()
    for item in sets:
        if "=" not in item:
            raise click.UsageError("--set expects key=value, got %r" % item)
        key, value = item.split("=", 1)
        try:
            config.set(key, value)
        except (KeyError, ValueError) as exc:
            raise click.UsageError(str(exc))
    return config


common_options = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 help="flat key=value config file"),
    click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                 help="override one config key (repeatable)"),
]


def add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@click.group()
def cli():
    """Unsupervised salient-object segmentation for video."""
    logging.basicConfig(level=logging.INFO, format="%(message)s")


@cli.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--output", "output_dir", required=True, type=click.Path())
@click.option("--truth", "truth_dir", type=click.Path(exists=True))
@click.option("--debug-dir", type=click.Path())
@click.option("--threads", type=int, default=1)
@click.option("--name", default=None, help="sequence name for reporting")
@add_options(common_options)
def run(input_dir, output_dir, truth_dir, debug_dir, threads, name,
        config_path, sets):
    """Run the full pipeline on a frame directory."""
    config = _build_config(config_path, sets)
    config.threads = threads
    result = run_pipeline(input_dir, output_dir, config, truth_dir=truth_dir,
                          debug_dir=debug_dir, name=name)
    for note in result.warnings:
        click.echo("warning: %s" % note, err=True)
    click.echo("stages: " + ", ".join(
        "%s %.2fs" % kv for kv in result.stage_seconds.items()))
    if result.report is not None:
        text, _ = report_table([result.report])
        click.echo(text)


@cli.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--debug-dir", type=click.Path())
@add_options(common_options)
def track(input_dir, debug_dir, config_path, sets):
    """Track grid points and report per-window survival."""
    config = _build_config(config_path, sets)
    volume = media_io.load_clip(input_dir, frame_rate=config.frame_rate)
    tcfg = tracker.TrackingConfig(
        grid_interval=config.tracking.grid_interval,
        window_length=config.tracking.window_length,
        pyramid_levels=config.tracking.pyramid_levels,
        lk_window=config.tracking.lk_window,
        max_iterations=config.tracking.max_iterations,
        convergence_eps=config.tracking.convergence_eps,
        fb_threshold=config.tracking.fb_threshold)
    windows = tracker.track_clip(volume, tcfg)
    for start, n_frames, trajectories in windows:
        survived = sum(t.alive_through(n_frames) for t in trajectories)
        click.echo("window %d (%d frames): %d/%d points survive"
                   % (start, n_frames, survived, len(trajectories)))
    if debug_dir:
        _export_tracked_points(volume, windows, debug_dir)


@cli.command(name="supervoxel")
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--debug-dir", type=click.Path())
@add_options(common_options)
def supervoxel_cmd(input_dir, debug_dir, config_path, sets):
    """Generate supervoxels only; optional boundary overlay export."""
    config = _build_config(config_path, sets)
    volume = media_io.load_clip(input_dir, frame_rate=config.frame_rate)
    labels = _supervoxels(volume, config)
    click.echo("supervoxels: %d clusters over %d frames"
               % (labels.num_clusters, volume.depth))
    if debug_dir:
        _export_boundaries(volume, labels.labels, debug_dir)


@cli.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--output", "output_dir", required=True, type=click.Path())
@add_options(common_options)
def coarse(input_dir, output_dir, config_path, sets):
    """Coarse stage only: export the fused trimap."""
    from . import coarse_fusion

    config = _build_config(config_path, sets)
    volume = media_io.load_clip(input_dir, frame_rate=config.frame_rate)
    points, problems = _coarse_points(volume, config)
    labels = _supervoxels(volume, config)
    for note in problems:
        click.echo("warning: %s" % note, err=True)
    trimap = coarse_fusion.fuse(labels, points)
    media_io.write_trimap(trimap, output_dir)
    click.echo("trimap fractions bg/fg/undetermined: %.3f/%.3f/%.3f"
               % coarse_fusion.trimap_stats(trimap))


@cli.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--trimap", "trimap_dir", required=True, type=click.Path(exists=True))
@click.option("--output", "output_dir", required=True, type=click.Path())
@add_options(common_options)
def fine(input_dir, trimap_dir, output_dir, config_path, sets):
    """Fine stage only: refine an exported trimap into masks."""
    from .fine_seg import segment_clip

    config = _build_config(config_path, sets)
    volume = media_io.load_clip(input_dir, frame_rate=config.frame_rate)
    trimap = media_io.read_trimap(trimap_dir)
    masks, infos = segment_clip(volume, trimap, k=config.grabcut.k,
                                gamma=config.grabcut.gamma,
                                max_iters=config.grabcut.max_iters)
    media_io.write_mask(masks, output_dir)
    n_warn = sum(len(i["warnings"]) for i in infos)
    click.echo("wrote %d masks (%d warnings)" % (masks.shape[0], n_warn))


@cli.command(name="eval")
@click.option("--result", "result_dir", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_dir", required=True, type=click.Path(exists=True))
@click.option("--name", default="sequence")
@click.option("--csv", "csv_path", default="report.csv", type=click.Path())
def eval_cmd(result_dir, truth_dir, name, csv_path):
    """XOR pixel-error evaluation of result masks against ground truth."""
    result = media_io.read_ground_truth(result_dir)
    truth = media_io.read_ground_truth(truth_dir)
    report = xor_error(result, truth, name=name)
    text, csv = report_table([report])
    click.echo(text)
    with open(csv_path, "w") as fh:
        fh.write(csv)


@cli.command()
@click.option("--output", "output_dir", required=True, type=click.Path())
@click.option("--width", default=100)
@click.option("--height", default=100)
@click.option("--frames", default=30)
@click.option("--object-size", default="20x20", help="WxH of the moving object")
@click.option("--speed", default="2,0", help="dx,dy pixels/frame")
@click.option("--flat-bg", is_flag=True, help="untextured background")
@click.option("--seed", default=7)
def synth(output_dir, width, height, frames, object_size, speed, flat_bg, seed):
    """Generate a deterministic synthetic clip with ground truth."""
    try:
        ow, oh = (int(v) for v in object_size.lower().split("x"))
        dx, dy = (float(v) for v in speed.split(","))
    except ValueError:
        raise click.UsageError("bad --object-size or --speed format")
    spec = SceneSpec(width=width, height=height, frames=frames,
                     object_size=(ow, oh), speed=(dx, dy),
                     background_textured=not flat_bg, seed=seed)
    frame_dir, truth_dir = write_synthetic(output_dir, spec)
    click.echo("frames: %s" % frame_dir)
    click.echo("truth:  %s" % truth_dir)


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000)
def serve(host, port):
    """Start the HTTP service wrapping the pipeline."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


def _export_tracked_points(volume, windows, directory):
    os.makedirs(directory, exist_ok=True)
    per_frame = {}
    for start, n_frames, trajectories in windows:
        for traj in trajectories:
            for t in range(n_frames):
                if traj.alive[t]:
                    per_frame.setdefault(start + t, []).append(traj.positions[t])
    for t in range(volume.depth):
        img = Image.fromarray((volume.rgb[t] * 255).round().astype(np.uint8))
        draw = ImageDraw.Draw(img)
        for x, y in per_frame.get(t, []):
            draw.ellipse([x - 1.5, y - 1.5, x + 1.5, y + 1.5], fill=(255, 0, 0))
        img.save(os.path.join(directory, "points_%05d.png" % t))


def _export_boundaries(volume, labels, directory):
    os.makedirs(directory, exist_ok=True)
    for t in range(volume.depth):
        frame = (volume.rgb[t] * 255).round().astype(np.uint8)
        lab = labels[t]
        edge = np.zeros(lab.shape, dtype=bool)
        edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
        edge[1:, :] |= lab[1:, :] != lab[:-1, :]
        frame[edge] = (255, 255, 0)
        Image.fromarray(frame).save(os.path.join(directory, "voxels_%05d.png" % t))


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo("usage error: %s" % exc.format_message(), err=True)
        return 1
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 1
    except DATA_ERRORS as exc:
        click.echo("data error: %s" % exc, err=True)
        return 2
    except Exception as exc:  # noqa: BLE001
        click.echo("internal error: %s" % exc, err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
