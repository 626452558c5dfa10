"""Binary container for named float32 arrays (weights, spilled caches).

Layout, all little-endian: magic "ZSWT", version u32, then for each array a
name (length u16 + utf-8 bytes), rank u8, dims u32 each, and the float32
payload in row-major order.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from ..errors import ContainerError

MAGIC = b"ZSWT"
VERSION = 1


def save_named_arrays(path, arrays: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in arrays.items():
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ContainerError(f"array name too long: {name[:32]}...")
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f4").tobytes())


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ContainerError("truncated weight container")
    return data


def load_named_arrays(path) -> dict:
    out = {}
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise ContainerError(f"{path}: not a weight container")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise ContainerError(f"unsupported container version {version}")
        while True:
            head = fh.read(2)
            if not head:
                break
            if len(head) != 2:
                raise ContainerError("truncated weight container")
            (name_len,) = struct.unpack("<H", head)
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            payload = _read_exact(fh, 4 * count)
            arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
            if name in out:
                raise ContainerError(f"duplicate array name {name!r}")
            out[name] = arr
    return out
