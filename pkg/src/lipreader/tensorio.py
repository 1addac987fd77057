"""Binary serialization for dense float64 tensors.

Format (little-endian): magic ``TNSR``, u32 rank, u64 per-axis sizes,
then the payload as raw float64 in row-major (C) order. This is the
common on-disk carrier used by dataset files, checkpoints, and the
decoder CLI.
"""

from __future__ import annotations

import io
import struct

import numpy as np

MAGIC = b"TNSR"


class TensorFormatError(ValueError):
    """Raised when a blob does not parse as a tensor record."""


def write_tensor(fh, array: np.ndarray) -> None:
    """Append one tensor record to a binary stream."""
    arr = np.ascontiguousarray(array, dtype=np.float64)
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes(order="C"))


def read_tensor(fh) -> np.ndarray:
    """Read one tensor record from a binary stream."""
    magic = fh.read(4)
    if magic != MAGIC:
        raise TensorFormatError(f"bad tensor magic {magic!r}, expected {MAGIC!r}")
    (rank,) = struct.unpack("<I", fh.read(4))
    if rank > 32:
        raise TensorFormatError(f"implausible tensor rank {rank}")
    shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
    count = int(np.prod(shape, dtype=np.uint64)) if rank else 1
    payload = fh.read(8 * count)
    if len(payload) != 8 * count:
        raise TensorFormatError("truncated tensor payload")
    data = np.frombuffer(payload, dtype="<f8", count=count)
    return data.reshape(shape).copy()


def tensor_to_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, array)
    return buf.getvalue()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(blob))


def save_tensor(path, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, array)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
