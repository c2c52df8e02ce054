"""Binary field snapshots.

Layout (little endian): the magic bytes ``MVF1``, ``u32 n``, ``f64 l``,
``f64 t``, ``u8 kind`` (0 scalar, 1 vector) and then one (scalar) or two
(vector) ``n x n`` planes of ``f64`` in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .fields import Grid2D

MAGIC = b"MVF1"
_HEADER = struct.Struct("<4sIddB")


class SnapshotError(ValueError):
    """The file is not a well-formed snapshot."""


def encode(grid: Grid2D, t: float, data: np.ndarray) -> bytes:
    data = np.asarray(data, dtype="<f8")
    if data.shape == (grid.n, grid.n):
        kind = 0
    elif data.shape == (2, grid.n, grid.n):
        kind = 1
    else:
        raise ValueError(f"cannot store array of shape {data.shape} on an n={grid.n} grid")
    return _HEADER.pack(MAGIC, grid.n, grid.l, float(t), kind) + np.ascontiguousarray(data).tobytes()


def decode(blob: bytes) -> tuple[Grid2D, float, np.ndarray]:
    if len(blob) < _HEADER.size:
        raise SnapshotError("truncated snapshot header")
    magic, n, l, t, kind = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if kind not in (0, 1):
        raise SnapshotError(f"unknown field kind {kind}")
    planes = 1 + kind
    expected = _HEADER.size + 8 * planes * n * n
    if len(blob) != expected:
        raise SnapshotError(f"snapshot size {len(blob)} does not match header ({expected})")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(float)
    shape = (n, n) if kind == 0 else (2, n, n)
    return Grid2D(n, l), t, data.reshape(shape)


def write_snapshot(path, grid: Grid2D, t: float, data: np.ndarray) -> None:
    Path(path).write_bytes(encode(grid, t, data))


def read_snapshot(path) -> tuple[Grid2D, float, np.ndarray]:
    """Return ``(grid, t, data)`` stored at ``path``."""
    return decode(Path(path).read_bytes())
