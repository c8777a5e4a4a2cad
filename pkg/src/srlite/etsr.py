"""ETSR: a minimal binary tensor file format for interchange.

Layout, all little-endian:

    magic   4 bytes  b"ETSR"
    version 1 byte   (= 1)
    dtype   1 byte   (0 = float32; the only defined code)
    rank    4 bytes  unsigned
    dims    rank * 4 bytes unsigned
    payload prod(dims) * 4 bytes of float32, row-major (C order)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ETSR"
VERSION = 1
DTYPE_F32 = 0

__all__ = ["MAGIC", "VERSION", "DTYPE_F32", "dumps", "loads", "read_tensor", "write_tensor"]


def dumps(a: np.ndarray) -> bytes:
    """Serialize an array as ETSR bytes; data is cast to float32."""
    a = np.ascontiguousarray(np.asarray(a), dtype="<f4")
    header = MAGIC + struct.pack("<BBI", VERSION, DTYPE_F32, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + a.tobytes(order="C")


def loads(buf: bytes) -> np.ndarray:
    """Parse ETSR bytes into a float32 array."""
    if len(buf) < 10:
        raise ValueError("truncated ETSR data")
    if buf[:4] != MAGIC:
        raise ValueError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    version, dtype_code, rank = struct.unpack_from("<BBI", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported ETSR version {version}")
    if dtype_code != DTYPE_F32:
        raise ValueError(f"unsupported dtype code {dtype_code}")
    offset = 10
    if len(buf) < offset + 4 * rank:
        raise ValueError("truncated ETSR dims")
    dims = struct.unpack_from(f"<{rank}I", buf, offset)
    offset += 4 * rank
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = buf[offset:]
    if len(payload) != 4 * count:
        raise ValueError(f"payload has {len(payload)} bytes, expected {4 * count}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def write_tensor(path: str | Path, a: np.ndarray) -> None:
    Path(path).write_bytes(dumps(a))


def read_tensor(path: str | Path) -> np.ndarray:
    return loads(Path(path).read_bytes())
