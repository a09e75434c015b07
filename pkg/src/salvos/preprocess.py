"""
Smoothing, pyramids and dense optical flow feeding the tracker and the
supervoxel stage.
"""

import numpy as np
from scipy import ndimage

REC601 = np.array([0.299, 0.587, 0.114])


def rgb_to_gray(rgb):
    """Rec. 601 luma of an RGB array in [0, 1]."""
    return np.asarray(rgb, dtype=np.float64) @ REC601


def bilateral_filter(frame, sigma_spatial=5.0, sigma_range=0.1):
    """Edge-preserving smoothing of an RGB frame, applied per channel.

    Direct windowed implementation: spatial Gaussian times a range Gaussian
    on the per-channel intensity difference.  Window radius is 3 sigma.
    """
    if sigma_spatial <= 0 or sigma_range <= 0:
        raise ValueError("sigmas must be positive")
    frame = np.asarray(frame, dtype=np.float64)
    single = frame.ndim == 2
    if single:
        frame = frame[..., None]
    radius = max(1, int(np.ceil(3.0 * sigma_spatial)))
    pad = np.pad(frame, ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    h, w = frame.shape[:2]
    num = np.zeros_like(frame)
    den = np.zeros_like(frame)
    inv2ss = 1.0 / (2.0 * sigma_spatial ** 2)
    inv2sr = 1.0 / (2.0 * sigma_range ** 2)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            ws = np.exp(-(dx * dx + dy * dy) * inv2ss)
            shifted = pad[radius + dy:radius + dy + h, radius + dx:radius + dx + w]
            wr = np.exp(-((shifted - frame) ** 2) * inv2sr)
            num += ws * wr * shifted
            den += ws * wr
    out = num / den
    return out[..., 0] if single else out


def build_pyramid(frame, levels, min_size=16):
    """Gaussian-blur-then-decimate chain; level 0 is the source image."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    frame = np.asarray(frame, dtype=np.float64)
    pyramid = [frame]
    for _ in range(levels - 1):
        prev = pyramid[-1]
        if (prev.shape[0] + 1) // 2 < min_size or (prev.shape[1] + 1) // 2 < min_size:
            raise ValueError(
                "image %dx%d too small for %d pyramid levels (min %d)"
                % (frame.shape[1], frame.shape[0], levels, min_size))
        blurred = ndimage.gaussian_filter(prev, sigma=1.0, mode="nearest")
        pyramid.append(blurred[::2, ::2])
    return pyramid


def _warp(image, u, v):
    """Backward-warp image by flow: result(x) = image(x + flow(x))."""
    h, w = image.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(image, [yy + v, xx + u], order=1, mode="nearest")


_HS_KERNEL = np.array([[1 / 12, 1 / 6, 1 / 12],
                       [1 / 6, 0.0, 1 / 6],
                       [1 / 12, 1 / 6, 1 / 12]])


def _horn_schunck(f0, f1, alpha, iterations, u, v):
    """One Horn-Schunck solve refining an initial flow (u, v) in place."""
    warped = _warp(f1, u, v)
    fx = 0.5 * (np.gradient(f0, axis=1) + np.gradient(warped, axis=1))
    fy = 0.5 * (np.gradient(f0, axis=0) + np.gradient(warped, axis=0))
    ft = warped - f0
    du = np.zeros_like(u)
    dv = np.zeros_like(v)
    denom = alpha ** 2 + fx ** 2 + fy ** 2
    for _ in range(iterations):
        du_avg = ndimage.convolve(du, _HS_KERNEL, mode="nearest")
        dv_avg = ndimage.convolve(dv, _HS_KERNEL, mode="nearest")
        t = (fx * du_avg + fy * dv_avg + ft) / denom
        du = du_avg - fx * t
        dv = dv_avg - fy * t
    return u + du, v + dv


def dense_flow(frame_t, frame_t1, alpha=15.0, iterations=100, levels=3):
    """Coarse-to-fine Horn-Schunck flow from frame_t to frame_t1.

    Returns (u, v) arrays in pixels/frame, same shape as the input frames.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if frame_t.shape != frame_t1.shape:
        raise ValueError("frames must have identical dimensions")
    # alpha is calibrated for 8-bit intensity scale
    frame_t = np.asarray(frame_t, dtype=np.float64) * 255.0
    frame_t1 = np.asarray(frame_t1, dtype=np.float64) * 255.0
    # Clamp the pyramid so the coarsest level stays usable on small inputs.
    max_levels = 1
    h, w = frame_t.shape
    while max_levels < levels and min(h, w) >= 32:
        h, w = (h + 1) // 2, (w + 1) // 2
        max_levels += 1
    p0 = build_pyramid(frame_t, max_levels)
    p1 = build_pyramid(frame_t1, max_levels)
    u = np.zeros_like(p0[-1])
    v = np.zeros_like(p0[-1])
    for level in range(max_levels - 1, -1, -1):
        if level < max_levels - 1:
            h, w = p0[level].shape
            u = 2.0 * _resize(u, (h, w))
            v = 2.0 * _resize(v, (h, w))
        u, v = _horn_schunck(p0[level], p1[level], alpha, iterations, u, v)
    return u, v


def _resize(field, shape):
    h, w = field.shape
    yy = np.linspace(0, h - 1, shape[0])
    xx = np.linspace(0, w - 1, shape[1])
    grid = np.meshgrid(yy, xx, indexing="ij")
    return ndimage.map_coordinates(field, grid, order=1, mode="nearest")


def flow_volume(gray_frames, alpha=15.0, iterations=100, levels=3):
    """Per-frame (u, v) fields for a grayscale stack.

    The last frame duplicates the penultimate field so every frame has flow.
    """
    gray_frames = np.asarray(gray_frames)
    depth = gray_frames.shape[0]
    uv = np.zeros(gray_frames.shape[:3] + (2,))
    for t in range(depth - 1):
        u, v = dense_flow(gray_frames[t], gray_frames[t + 1], alpha, iterations, levels)
        uv[t, ..., 0] = u
        uv[t, ..., 1] = v
    if depth >= 2:
        uv[-1] = uv[-2]
    return uv


def flow_to_color(u, v, max_magnitude=None):
    """Standard flow colour wheel rendering (hue=direction, saturation=speed)."""
    import colorsys

    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = max(mag.max(), 1e-9)
    ang = (np.arctan2(-v, -u) / np.pi + 1.0) / 2.0
    sat = np.clip(mag / max_magnitude, 0, 1)
    hsv = np.stack([ang, sat, np.ones_like(sat)], axis=-1)
    # vectorized hsv->rgb
    h6 = hsv[..., 0] * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    s = hsv[..., 1]
    p, q, t = 1 - s, 1 - s * f, 1 - s * (1 - f)
    one = np.ones_like(s)
    lut = np.stack([
        np.stack([one, t, p], -1), np.stack([q, one, p], -1),
        np.stack([p, one, t], -1), np.stack([p, q, one], -1),
        np.stack([t, p, one], -1), np.stack([one, p, q], -1),
    ], axis=0)
    rgb = np.take_along_axis(lut, i[None, ..., None], axis=0)[0]
    return (rgb * 255).astype(np.uint8)
