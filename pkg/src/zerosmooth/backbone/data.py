"""Synthetic moving-shape clips used to train and probe the toy denoiser."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

SHAPE_KINDS = ("square", "disc")


@dataclass(frozen=True)
class SyntheticClipSpec:
    """One clip: a shape moving at constant velocity with wall reflection.

    x0/y0 are fractional start positions in [0, 1] (mapped to the valid
    pixel range at render time); velocity is in pixels per frame.
    """

    seed: int
    kind: str
    x0: float
    y0: float
    vx: float
    vy: float
    intensity: float

    @classmethod
    def from_seed(cls, seed: int) -> "SyntheticClipSpec":
        rng = np.random.default_rng(seed)
        kind = SHAPE_KINDS[int(rng.integers(len(SHAPE_KINDS)))]
        x0, y0 = rng.uniform(0.0, 1.0, 2)
        vx, vy = rng.uniform(-2.0, 2.0, 2)
        intensity = float(rng.uniform(0.5, 1.0))
        return cls(seed, kind, float(x0), float(y0), float(vx), float(vy), intensity)

    def with_speed_factor(self, factor: float) -> "SyntheticClipSpec":
        return dataclasses.replace(self, vx=self.vx * factor, vy=self.vy * factor)


def _reflect(value: float, lo: float, hi: float) -> float:
    span = hi - lo
    if span <= 0:
        return lo
    m = (value - lo) % (2.0 * span)
    return lo + (m if m <= span else 2.0 * span - m)


def generate_clip(spec: SyntheticClipSpec, t_frames: int, height: int = 16,
                  width: int = 16) -> np.ndarray:
    """Render the clip as a (t_frames, 1, height, width) array in [0, 1]."""
    side = min(5, max(2, min(height, width) // 3))
    radius = max(1, side // 2)
    if spec.kind == "square":
        lo_x, hi_x = 0.0, float(width - side)
        lo_y, hi_y = 0.0, float(height - side)
    else:
        lo_x, hi_x = float(radius), float(width - 1 - radius)
        lo_y, hi_y = float(radius), float(height - 1 - radius)
    start_x = lo_x + spec.x0 * (hi_x - lo_x)
    start_y = lo_y + spec.y0 * (hi_y - lo_y)

    video = np.zeros((t_frames, 1, height, width))
    ys, xs = np.mgrid[0:height, 0:width]
    for f in range(t_frames):
        cx = _reflect(start_x + spec.vx * f, lo_x, hi_x)
        cy = _reflect(start_y + spec.vy * f, lo_y, hi_y)
        if spec.kind == "square":
            r0, c0 = int(round(cy)), int(round(cx))
            video[f, 0, r0:r0 + side, c0:c0 + side] = spec.intensity
        else:
            mask = (ys - round(cy)) ** 2 + (xs - round(cx)) ** 2 <= radius**2
            video[f, 0, mask] = spec.intensity
    return video


def random_training_example(rng: np.random.Generator, t_frames: int, height: int,
                            width: int, base_fps: float = 8.0):
    """Draw one (clip, cond) pair at the generator's native frame rate.

    Speeds stay in [1, 2] px/frame, so slower motion (what a higher-rate
    stage sees per frame) lies outside the trained regime.
    """
    spec = SyntheticClipSpec.from_seed(int(rng.integers(2**32)))
    speed = float(np.hypot(spec.vx, spec.vy))
    target = float(rng.uniform(1.0, 2.0))
    if speed < 1e-6:
        angle = rng.uniform(0.0, 2 * np.pi)
        spec = dataclasses.replace(spec, vx=float(np.cos(angle)) * target,
                                   vy=float(np.sin(angle)) * target)
    else:
        spec = spec.with_speed_factor(target / speed)
    clip = generate_clip(spec, t_frames, height, width)
    cond = {"class_id": SHAPE_KINDS.index(spec.kind), "fps": base_fps}
    return clip, cond
