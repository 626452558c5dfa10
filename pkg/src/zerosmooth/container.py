"""Bit-exact video container and 8-bit frame export.

Container layout, little-endian: magic "ZSVID\\0", version u32 = 1, dims
T, C, H, W as u32, then the float32 payload in (T, C, H, W) row-major
order. Frame export writes one binary PGM (C == 1) or PPM (C == 3) per
frame with values clamped from [0, 1] to [0, 255].
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContainerError, DimensionError

MAGIC = b"ZSVID\0"
VERSION = 1


def write_video(path, video) -> None:
    video = np.asarray(video)
    if video.ndim != 4:
        raise DimensionError(f"expected a (T, C, H, W) video, got shape {video.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", VERSION, *video.shape))
        fh.write(np.ascontiguousarray(video, dtype="<f4").tobytes())


def read_video(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head != MAGIC:
            raise ContainerError(f"{path}: not a video container")
        meta = fh.read(20)
        if len(meta) != 20:
            raise ContainerError(f"{path}: truncated header")
        version, t, c, h, w = struct.unpack("<5I", meta)
        if version != VERSION:
            raise ContainerError(f"unsupported container version {version}")
        count = t * c * h * w
        payload = fh.read(4 * count)
        if len(payload) != 4 * count:
            raise ContainerError(f"{path}: truncated payload")
        if fh.read(1):
            raise ContainerError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f4").reshape(t, c, h, w).copy()


def _to_bytes(frame: np.ndarray) -> bytes:
    clamped = np.clip(frame, 0.0, 1.0)
    return (np.round(clamped * 255.0)).astype(np.uint8).tobytes()


def export_frames(video, out_dir, prefix: str = "frame") -> list:
    """Write one PGM/PPM file per frame; returns the written paths."""
    video = np.asarray(video)
    if video.ndim != 4:
        raise DimensionError(f"expected a (T, C, H, W) video, got shape {video.shape}")
    t, c, h, w = video.shape
    if c not in (1, 3):
        raise ContainerError(f"frame export supports 1 or 3 channels, got {c}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(t):
        if c == 1:
            path = out_dir / f"{prefix}_{i:04d}.pgm"
            header = f"P5\n{w} {h}\n255\n".encode()
            body = _to_bytes(video[i, 0])
        else:
            path = out_dir / f"{prefix}_{i:04d}.ppm"
            header = f"P6\n{w} {h}\n255\n".encode()
            body = _to_bytes(video[i].transpose(1, 2, 0))
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body)
        paths.append(path)
    return paths
