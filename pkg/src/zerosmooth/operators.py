"""Temporal measurement operators and range/null-space back-projection.

Three operator families act along the frame axis of a video or hidden-state
tensor: a sampling operator that copies every n-th frame, and a pair of
2x averaging operators whose align corners differ (one averages frames
(2i, 2i+1), the other pins frame 0 and averages (2i-1, 2i)). Each operator
caches its pseudo-inverse and null-space projector so back-projection is a
pair of small matrix products.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, DimensionError, UnsupportedVariantError
from .numerics import pseudo_inverse


class OperatorKind(enum.Enum):
    SAMPLING = "sampling"
    INTERP_LEFT = "a1"
    INTERP_RIGHT = "a2"


@dataclass(frozen=True)
class LinearMeasurement:
    """A t0 x t frame measurement with cached pseudo-inverse and projector."""

    kind: OperatorKind
    t0: int
    t: int
    matrix: np.ndarray
    pinv: np.ndarray
    null_proj: np.ndarray
    key_indices: tuple = field(default=())

    @property
    def scale(self) -> int:
        return self.t // self.t0


def _finalize(kind, t0, t, matrix, key_indices=()) -> LinearMeasurement:
    pinv = pseudo_inverse(matrix)
    null_proj = np.eye(t) - pinv @ matrix
    matrix.setflags(write=False)
    pinv.setflags(write=False)
    null_proj.setflags(write=False)
    return LinearMeasurement(kind, t0, t, matrix, pinv, null_proj, tuple(key_indices))


def build_sampling(t0: int, scale: int) -> LinearMeasurement:
    """Operator whose row i selects frame i*scale from a t0*scale-frame video."""
    if t0 < 2:
        raise ConfigError(f"sampling operator needs t0 >= 2, got {t0}")
    if scale < 2:
        raise ConfigError(f"sampling operator needs scale >= 2, got {scale}")
    t = t0 * scale
    m = np.zeros((t0, t))
    keys = [i * scale for i in range(t0)]
    m[np.arange(t0), keys] = 1.0
    return _finalize(OperatorKind.SAMPLING, t0, t, m, keys)


def build_interp(t0: int, variant: str, scale: int = 2) -> LinearMeasurement:
    """2x temporal-averaging operator, variant "a1" or "a2".

    a1 row i averages frames (2i, 2i+1); a2 keeps frame 0 and row i >= 1
    averages frames (2i-1, 2i), leaving the final frame unobserved.
    """
    if scale != 2:
        raise UnsupportedVariantError(
            f"interpolation operators are defined for scale 2, got {scale}"
        )
    if t0 < 2:
        raise ConfigError(f"interpolation operator needs t0 >= 2, got {t0}")
    t = 2 * t0
    m = np.zeros((t0, t))
    if variant == "a1":
        for i in range(t0):
            m[i, 2 * i] = 0.5
            m[i, 2 * i + 1] = 0.5
        kind = OperatorKind.INTERP_LEFT
    elif variant == "a2":
        m[0, 0] = 1.0
        for i in range(1, t0):
            m[i, 2 * i - 1] = 0.5
            m[i, 2 * i] = 0.5
        kind = OperatorKind.INTERP_RIGHT
    else:
        raise UnsupportedVariantError(f"unknown interpolation variant {variant!r}")
    return _finalize(kind, t0, t, m)


@lru_cache(maxsize=64)
def interp_pair(t0: int):
    """Memoized (a1, a2) pair for 2x correction of a t0-key-frame stage."""
    return build_interp(t0, "a1"), build_interp(t0, "a2")


def back_project(x: np.ndarray, xk: np.ndarray, m: LinearMeasurement) -> np.ndarray:
    """Replace the range-space part of x along the frame axis with xk.

    Computes (I - A†A) x + A† xk over axis 0, independently for every
    trailing coordinate. For the sampling operator this reduces to writing
    xk's rows into the key-frame slots, which keeps key frames bit-exact.
    """
    x = np.asarray(x)
    xk = np.asarray(xk)
    if x.shape[0] != m.t:
        raise DimensionError(f"expected {m.t} frames, got {x.shape[0]}")
    if xk.shape[0] != m.t0:
        raise DimensionError(f"expected {m.t0} observed frames, got {xk.shape[0]}")
    if x.shape[1:] != xk.shape[1:]:
        raise DimensionError(
            f"trailing shapes differ: {x.shape[1:]} vs {xk.shape[1:]}"
        )
    if m.kind is OperatorKind.SAMPLING:
        out = x.copy()
        out[list(m.key_indices)] = xk
        return out
    null_part = np.tensordot(m.null_proj.astype(x.dtype), x, axes=([1], [0]))
    range_part = np.tensordot(m.pinv.astype(x.dtype), xk, axes=([1], [0]))
    return null_part + range_part


def apply_measurement(m: LinearMeasurement, x: np.ndarray) -> np.ndarray:
    """Apply A along the frame axis: observed = A x."""
    x = np.asarray(x)
    if x.shape[0] != m.t:
        raise DimensionError(f"expected {m.t} frames, got {x.shape[0]}")
    return np.tensordot(m.matrix.astype(x.dtype), x, axes=([1], [0]))


def extract_key_frames(m: LinearMeasurement, x: np.ndarray) -> np.ndarray:
    """Key frames of x under a sampling operator (a view-free copy)."""
    if m.kind is not OperatorKind.SAMPLING:
        raise ConfigError("key-frame extraction needs a sampling operator")
    return np.asarray(x)[list(m.key_indices)].copy()
