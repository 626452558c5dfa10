"""PSNR / SSIM over (T, C, H, W) videos and key-frame consistency."""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError
from .operators import LinearMeasurement, extract_key_frames

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0


def _as_video(x) -> np.ndarray:
    video = getattr(x, "video", x)
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4:
        raise DimensionError(f"expected a (T, C, H, W) video, got shape {video.shape}")
    return video


def psnr(a, b) -> float:
    """10 log10(1 / MSE) for unit dynamic range; identical inputs give inf."""
    a = _as_video(a)
    b = _as_video(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _box_sums(img: np.ndarray, w: int) -> np.ndarray:
    """Sums over all w x w windows (valid positions) via an integral image."""
    integ = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    integ[1:, 1:] = img.cumsum(axis=0).cumsum(axis=1)
    return (integ[w:, w:] - integ[:-w, w:] - integ[w:, :-w] + integ[:-w, :-w])


def _ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    w = SSIM_WINDOW
    n = w * w
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    mu_x = _box_sums(x, w) / n
    mu_y = _box_sums(y, w) / n
    # population statistics within each window
    var_x = _box_sums(x * x, w) / n - mu_x**2
    var_y = _box_sums(y * y, w) / n - mu_y**2
    cov = _box_sums(x * y, w) / n - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float((num / den).mean())


def ssim(a, b) -> float:
    """Mean single-scale SSIM over frames and channels, uniform 7x7 window."""
    a = _as_video(a)
    b = _as_video(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[2] < SSIM_WINDOW or a.shape[3] < SSIM_WINDOW:
        raise DimensionError(
            f"frames {a.shape[2]}x{a.shape[3]} smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    scores = [
        _ssim_plane(a[t, c], b[t, c])
        for t in range(a.shape[0])
        for c in range(a.shape[1])
    ]
    return float(np.mean(scores))


def keyframe_consistency(high_fps, base, sampling: LinearMeasurement):
    """(psnr, ssim) between the high-rate video's key frames and the base."""
    high = _as_video(high_fps)
    base = _as_video(base)
    keys = extract_key_frames(sampling, high)
    return psnr(keys, base), ssim(keys, base)
