"""Dataset files: a stream of length-prefixed records, no file header.

Each record is one u64 little-endian byte count followed by twelve binary
tensor blobs in a fixed order. An empty file is a valid empty dataset;
anything short of a whole record fails with the index of the broken record.
"""

from __future__ import annotations

import struct

import numpy as np

from ..autodiff import tensor_from_bytes, tensor_to_bytes
from ..errors import FormatError
from .scene import AUX_SIZE, HandRecord, Sample

_LEN = struct.Struct("<Q")

# record layout: (attribute path, expected shape); None extents are free
_FIELDS = (
    ("image", None),
    ("flags", (2,)),
    ("rel", (3,)),
    ("aux", (AUX_SIZE,)),
    ("left.joints25", (21, 3)),
    ("left.vertices", (64, 3)),
    ("left.theta", (48,)),
    ("left.beta", (10,)),
    ("right.joints25", (21, 3)),
    ("right.vertices", (64, 3)),
    ("right.theta", (48,)),
    ("right.beta", (10,)),
)


def _get(sample, path):
    obj = sample
    for part in path.split("."):
        obj = getattr(obj, part)
    return obj


def sample_to_bytes(sample: Sample) -> bytes:
    body = b"".join(tensor_to_bytes(np.asarray(_get(sample, path))) for path, _ in _FIELDS)
    return _LEN.pack(len(body)) + body


def sample_from_bytes(body: bytes, index: int) -> Sample:
    arrays = []
    offset = 0
    for path, expected in _FIELDS:
        try:
            arr, offset = tensor_from_bytes(body, offset)
        except FormatError as exc:
            raise _record_error(index, f"field {path}: {exc}")
        if expected is not None and arr.shape != expected:
            raise _record_error(index, f"field {path} wants shape {expected}, got {arr.shape}")
        arrays.append(arr)
    if offset != len(body):
        raise _record_error(index, f"{len(body) - offset} trailing bytes")
    return Sample(
        arrays[0], arrays[1], arrays[2], arrays[3],
        HandRecord(*arrays[4:8]), HandRecord(*arrays[8:12]),
    )


def _record_error(index, message):
    err = FormatError(f"record {index}: {message}")
    err.record_index = index
    return err


def write_samples(path, samples):
    with open(path, "wb") as fh:
        for sample in samples:
            fh.write(sample_to_bytes(sample))


def iter_samples(path):
    """Yield samples one by one; truncation names the offending record."""
    with open(path, "rb") as fh:
        index = 0
        while True:
            head = fh.read(_LEN.size)
            if not head:
                return
            if len(head) < _LEN.size:
                raise _record_error(index, "truncated length prefix")
            (length,) = _LEN.unpack(head)
            body = fh.read(length)
            if len(body) < length:
                raise _record_error(index, f"body wants {length} bytes, got {len(body)}")
            yield sample_from_bytes(body, index)
            index += 1


def read_samples(path):
    return list(iter_samples(path))


def peek_geometry(path):
    """Image size, heat grid, and depth bins of the first record, or None."""
    for sample in iter_samples(path):
        return {
            "image_size": sample.image.shape[0],
            "heat_size": int(sample.aux[5]),
            "depth_bins": int(sample.aux[6]),
        }
    return None
