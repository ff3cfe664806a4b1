"""NNWT weights container: named float32 tensors in a flat binary file.

Layout (all integers unsigned 32-bit little-endian):

    magic "NNWT" | version=1 | tensor count
    per tensor: name length | UTF-8 name | ndim | dims... | raw float32
                little-endian values, row-major

No padding between records. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from retone.errors import WeightsFormatError

MAGIC = b"NNWT"
VERSION = 1


def write_nnwt(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors in insertion order; values are cast to float32."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_nnwt(path) -> dict[str, np.ndarray]:
    """Read a container back into an ordered name -> float32 array dict."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise WeightsFormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 12:
        raise WeightsFormatError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise WeightsFormatError(f"{path}: unsupported version {version}")
    pos = 12
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos : pos + name_len].decode("utf-8")
            if len(raw) < pos + name_len:
                raise struct.error
            pos += name_len
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            dims = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
        except (struct.error, UnicodeDecodeError):
            raise WeightsFormatError(f"{path}: corrupt record {i}") from None
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        nbytes = 4 * size
        if len(raw) < pos + nbytes:
            raise WeightsFormatError(
                f"{path}: payload for {name!r} is truncated ({len(raw) - pos} of {nbytes} bytes)"
            )
        arr = np.frombuffer(raw[pos : pos + nbytes], dtype="<f4").reshape(dims)
        pos += nbytes
        tensors[name] = arr.copy()
    if pos != len(raw):
        raise WeightsFormatError(f"{path}: {len(raw) - pos} trailing bytes after last tensor")
    return tensors
