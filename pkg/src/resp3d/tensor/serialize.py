"""P3DT binary tensor format.

Layout, all little-endian::

    b"P3DT"              magic
    u32                  format version (1)
    u32                  rank
    u64[rank]            extents
    3 bytes              dtype tag, b"f32" or b"f64"
    raw data             row-major, rank-product elements
"""

import struct

import numpy as np

MAGIC = b"P3DT"
VERSION = 1
_TAGS = {b"f32": np.dtype("<f4"), b"f64": np.dtype("<f8")}


class FormatError(ValueError):
    """A tensor or checkpoint stream is malformed or truncated."""


def tensor_to_bytes(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype == np.float32:
        tag = b"f32"
    elif arr.dtype == np.float64:
        tag = b"f64"
    else:
        raise TypeError(f"P3DT stores float32/float64 only, got {arr.dtype}")
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape) + tag
    return header + np.ascontiguousarray(arr, dtype=_TAGS[tag]).tobytes()


def tensor_from_bytes(buf, offset: int = 0):
    """Decode one tensor starting at ``offset``; returns ``(array, next_offset)``."""
    view = memoryview(buf)

    def take(n):
        nonlocal offset
        if offset + n > len(view):
            raise FormatError("truncated P3DT record")
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise FormatError("bad P3DT magic")
    version, rank = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError(f"unsupported P3DT version {version}")
    shape = struct.unpack(f"<{rank}Q", take(8 * rank))
    tag = bytes(take(3))
    if tag not in _TAGS:
        raise FormatError(f"unknown P3DT dtype tag {tag!r}")
    dtype = _TAGS[tag]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    data = np.frombuffer(take(count * dtype.itemsize), dtype=dtype).reshape(shape)
    return data.astype(dtype.newbyteorder("="), copy=True), offset


def save_tensor(path, arr) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(arr))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FormatError(f"{path}: trailing bytes after tensor")
    return arr
