"""Versioned binary checkpoint format: named float32 tensors with shapes.

Layout (little-endian): 8-byte magic ``NNCKPT01``, u32 version, u32 tensor
count; per tensor (sorted by name): u16 name length + UTF-8 name, u8 ndim,
u32 per dimension, then the float32 data row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NNCKPT01"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, state: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(state)))
        for name in sorted(state):
            value = np.asarray(state[name], dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", value.ndim))
            for d in value.shape:
                fh.write(struct.pack("<I", d))
            fh.write(value.tobytes(order="C"))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    pos = 0

    def need(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"truncated checkpoint at byte {pos}: expected {what}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    magic = need(8, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    version, count = struct.unpack("<II", need(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", need(2, "name length"))
        name = need(name_len, "name").decode("utf-8")
        (ndim,) = struct.unpack("<B", need(1, "ndim"))
        shape = tuple(
            struct.unpack("<I", need(4, "dim"))[0] for _ in range(ndim)
        )
        n_vals = int(np.prod(shape)) if shape else 1
        raw = need(4 * n_vals, f"data of {name}")
        state[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    if pos != len(data):
        raise CheckpointError(f"trailing bytes after tensor {len(state)}")
    return state
