"""Flat binary tensor format used for datasets and checkpoints.

Layout, all little-endian:

    bytes 0..3   magic "EATF"
    bytes 4..5   format version, u16 (currently 1)
    bytes 6..7   rank, u16
    then         rank extents, u64 each
    then         the row-major float64 payload

Round trips are bitwise: float64 in, the same float64 out.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"EATF"
VERSION = 1
_HEADER = struct.Struct("<4sHH")


def tensor_to_bytes(arr):
    arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    header = _HEADER.pack(MAGIC, VERSION, arr.ndim)
    extents = struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return header + extents + arr.tobytes()


def tensor_from_bytes(buf, offset=0):
    """Decode one tensor starting at ``offset``; returns (array, next_offset)."""
    end = offset + _HEADER.size
    if end > len(buf):
        raise FormatError("truncated tensor header")
    magic, version, rank = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported tensor format version {version}")
    ext_end = end + 8 * rank
    if ext_end > len(buf):
        raise FormatError("truncated tensor extents")
    shape = struct.unpack_from(f"<{rank}Q", buf, end) if rank else ()
    count = 1
    for s in shape:
        count *= s
    data_end = ext_end + 8 * count
    if data_end > len(buf):
        raise FormatError("truncated tensor payload")
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=ext_end).reshape(shape)
    return arr.astype(np.float64).copy(), data_end


def save_tensor(path, arr):
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(arr))


def load_tensor(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FormatError(f"trailing bytes after tensor payload in {path}")
    return arr
