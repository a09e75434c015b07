"""
Frame sequence I/O and colour conversion.

Clips are directories of lossless 8-bit images with contiguous numeric
suffixes.  Everything downstream works on float arrays: RGB in [0, 1] and
CIELAB (sRGB primaries, D65 white point).
"""

import os
import re

import numpy as np
from PIL import Image

FRAME_EXTENSIONS = (".png", ".ppm")

# sRGB <-> linear <-> XYZ (D65), CIELAB constants
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])
_LAB_EPS = 216.0 / 24389.0
_LAB_KAPPA = 24389.0 / 27.0


class ClipError(Exception):
    """Raised for malformed or incomplete frame directories."""


class FrameVolume:
    """A clip's frames with aligned per-pixel channels.

    Attributes
    ----------
    rgb : (depth, height, width, 3) float64, values in [0, 1]
    lab : (depth, height, width, 3) float64, derived from rgb
    frame_rate : frames per second (used by the supervoxel distance)
    """

    def __init__(self, rgb, frame_rate=30.0):
        rgb = np.asarray(rgb, dtype=np.float64)
        if rgb.ndim != 4 or rgb.shape[-1] != 3:
            raise ValueError("rgb must have shape (depth, height, width, 3)")
        if rgb.shape[0] < 2:
            raise ClipError("a clip needs at least 2 frames, got %d" % rgb.shape[0])
        self.rgb = rgb
        self.lab = rgb_to_lab(rgb)
        self.frame_rate = float(frame_rate)

    @property
    def depth(self):
        return self.rgb.shape[0]

    @property
    def height(self):
        return self.rgb.shape[1]

    @property
    def width(self):
        return self.rgb.shape[2]


def _srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * np.maximum(c, 0.0) ** (1.0 / 2.4) - 0.055)


def rgb_to_lab(rgb):
    """Convert sRGB values in [0, 1] to CIELAB (D65). Works on any (..., 3) array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    xyz = _srgb_to_linear(rgb) @ _RGB_TO_XYZ.T
    r = xyz / _D65_WHITE
    f = np.where(r > _LAB_EPS, np.cbrt(r), (_LAB_KAPPA * r + 16.0) / 116.0)
    lab = np.empty_like(rgb)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_rgb(lab):
    """Inverse of :func:`rgb_to_lab` (clipped to [0, 1])."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    r = np.where(f ** 3 > _LAB_EPS, f ** 3, (116.0 * f - 16.0) / _LAB_KAPPA)
    xyz = r * _D65_WHITE
    return np.clip(_linear_to_srgb(xyz @ _XYZ_TO_RGB.T), 0.0, 1.0)


def _list_frames(directory):
    """Return [(index, path)] for frame files in a directory, sorted by index."""
    frames = []
    for name in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(name)
        if ext.lower() not in FRAME_EXTENSIONS:
            continue
        m = re.search(r"(\d+)$", stem)
        if m is None:
            continue
        frames.append((int(m.group(1)), os.path.join(directory, name)))
    frames.sort()
    return frames


def load_clip(directory, frame_range=None, frame_rate=30.0):
    """Load a directory of frames into a FrameVolume.

    Parameters
    ----------
    directory : path containing ``<stem><zero-padded index>.png|ppm`` files
    frame_range : optional (start, stop) pair of frame indices, stop exclusive,
        referring to the numeric suffixes. Default: all frames found.

    Raises
    ------
    ClipError : on a missing index in the range or mixed frame dimensions.
    """
    frames = _list_frames(directory)
    if not frames:
        raise ClipError("no frame files found in %s" % directory)
    by_index = dict(frames)
    if frame_range is None:
        lo, hi = frames[0][0], frames[-1][0] + 1
    else:
        lo, hi = frame_range
    images = []
    shape = None
    for idx in range(lo, hi):
        if idx not in by_index:
            raise ClipError("missing frame index %d in %s" % (idx, directory))
        img = np.array(Image.open(by_index[idx]).convert("RGB"), dtype=np.float64)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise ClipError(
                "frame %d has dimensions %s, expected %s" % (idx, img.shape[:2], shape[:2]))
        images.append(img / 255.0)
    return FrameVolume(np.stack(images), frame_rate=frame_rate)


def split_into_clips(total_frames, clip_size):
    """Partition [0, total_frames) into contiguous clip ranges.

    The final clip may be shorter than clip_size but never shorter than 2
    frames; a length-1 remainder is merged into the previous clip.
    """
    if clip_size < 2:
        raise ValueError("clip_size must be >= 2")
    if total_frames < 2:
        raise ClipError("need at least 2 frames, got %d" % total_frames)
    ranges = []
    start = 0
    while start < total_frames:
        stop = min(start + clip_size, total_frames)
        if total_frames - stop == 1:
            stop = total_frames
        ranges.append((start, stop))
        start = stop
    if len(ranges) > 1 and ranges[-1][1] - ranges[-1][0] < 2:
        last = ranges.pop()
        prev = ranges.pop()
        ranges.append((prev[0], last[1]))
    return ranges


def write_mask(mask, directory):
    """Write a binary mask sequence as mask_%05d.png (foreground 255)."""
    mask = np.asarray(mask)
    os.makedirs(directory, exist_ok=True)
    for i, frame in enumerate(mask):
        img = (frame.astype(np.uint8) * 255)
        Image.fromarray(img, mode="L").save(
            os.path.join(directory, "mask_%05d.png" % i))


def read_ground_truth(directory):
    """Read per-frame ground truth; any nonzero pixel counts as foreground."""
    frames = _list_frames(directory)
    if not frames:
        raise ClipError("no ground-truth files found in %s" % directory)
    masks = []
    for _, path in frames:
        img = np.array(Image.open(path).convert("L"))
        masks.append((img > 0).astype(np.uint8))
    return np.stack(masks)


def write_trimap(trimap, directory):
    """Debug export of a trimap sequence as 0/128/255 grayscale images."""
    os.makedirs(directory, exist_ok=True)
    lut = np.array([0, 255, 128], dtype=np.uint8)
    for i, frame in enumerate(np.asarray(trimap)):
        Image.fromarray(lut[frame], mode="L").save(
            os.path.join(directory, "trimap_%05d.png" % i))


def read_trimap(directory):
    """Read a 0/128/255 trimap export back into codes {0, 1, 2}."""
    frames = _list_frames(directory)
    if not frames:
        raise ClipError("no trimap files found in %s" % directory)
    maps = []
    for _, path in frames:
        img = np.array(Image.open(path).convert("L"))
        codes = np.full(img.shape, 2, dtype=np.uint8)
        codes[img == 0] = 0
        codes[img == 255] = 1
        maps.append(codes)
    return np.stack(maps)


def write_overlay(volume, mask, directory, tint=(1.0, 0.3, 0.3)):
    """Export source frames with foreground pixels tinted."""
    os.makedirs(directory, exist_ok=True)
    tint = np.asarray(tint)
    for i in range(volume.depth):
        frame = volume.rgb[i].copy()
        fg = np.asarray(mask[i], dtype=bool)
        frame[fg] = 0.5 * frame[fg] + 0.5 * tint
        Image.fromarray((frame * 255).round().astype(np.uint8)).save(
            os.path.join(directory, "overlay_%05d.png" % i))
