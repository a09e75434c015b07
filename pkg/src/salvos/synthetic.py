"""
Deterministic synthetic scenes: a textured rectangle translating over a
textured (or flat) background, with per-frame ground-truth masks.  Used by
the test suite and the `synth` CLI command.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image

from scipy import ndimage


@dataclass
class SceneSpec:
    width: int = 100
    height: int = 100
    frames: int = 30
    object_size: tuple = (20, 20)        # (w, h)
    object_start: tuple = (10, 40)       # top-left (x, y)
    speed: tuple = (2.0, 0.0)            # pixels/frame
    background_textured: bool = True
    seed: int = 7


def _texture(shape, rng, low, high, smooth=1.5):
    """Smoothly varying random texture in [low, high] per channel."""
    noise = rng.random(shape + (3,))
    for c in range(3):
        noise[..., c] = ndimage.gaussian_filter(noise[..., c], smooth)
    noise -= noise.min()
    noise /= max(noise.max(), 1e-12)
    return low + (high - low) * noise


def make_synthetic(spec=None, **overrides):
    """Render a synthetic clip; returns (rgb frames, truth masks).

    rgb is (frames, h, w, 3) float in [0, 1]; truth is (frames, h, w) uint8.
    Raises if the object would leave the frame.
    """
    if spec is None:
        spec = SceneSpec(**overrides)
    rng = np.random.default_rng(spec.seed)
    ow, oh = spec.object_size
    bg = (_texture((spec.height, spec.width), rng, 0.05, 0.45)
          if spec.background_textured
          else np.full((spec.height, spec.width, 3), 0.25))
    obj = _texture((oh, ow), rng, 0.55, 0.95, smooth=1.0)

    frames = np.empty((spec.frames, spec.height, spec.width, 3))
    truth = np.zeros((spec.frames, spec.height, spec.width), dtype=np.uint8)
    for t in range(spec.frames):
        x = int(round(spec.object_start[0] + t * spec.speed[0]))
        y = int(round(spec.object_start[1] + t * spec.speed[1]))
        if x < 0 or y < 0 or x + ow > spec.width or y + oh > spec.height:
            raise ValueError("object leaves the frame at t=%d" % t)
        frames[t] = bg
        frames[t, y:y + oh, x:x + ow] = obj
        truth[t, y:y + oh, x:x + ow] = 1
    return frames, truth


def write_synthetic(directory, spec=None, **overrides):
    """Write frames and ground truth to <directory>/frames and /truth."""
    import os

    frames, truth = make_synthetic(spec, **overrides)
    frame_dir = os.path.join(directory, "frames")
    truth_dir = os.path.join(directory, "truth")
    os.makedirs(frame_dir, exist_ok=True)
    os.makedirs(truth_dir, exist_ok=True)
    for t in range(frames.shape[0]):
        Image.fromarray((frames[t] * 255).round().astype(np.uint8)).save(
            os.path.join(frame_dir, "frame_%05d.png" % t))
        Image.fromarray(truth[t] * 255, mode="L").save(
            os.path.join(truth_dir, "mask_%05d.png" % t))
    return frame_dir, truth_dir
