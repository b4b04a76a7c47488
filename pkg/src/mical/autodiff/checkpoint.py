"""Named-tensor checkpoint files.

Layout (little-endian): magic ``b"MICL"``, ``u32`` format version, ``u32``
tensor count, then per tensor ``u32`` name length, UTF-8 name, ``u32`` rank,
``rank`` x ``u64`` dims and the float64 payload in row-major order.
"""

import struct

import numpy as np

MAGIC = b"MICL"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors):
    """Serialize a mapping of name -> array-like to bytes (names kept in order)."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = np.ascontiguousarray(getattr(value, "values", value), dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(data):
    data = memoryview(data)
    if bytes(data[:4]) != MAGIC:
        raise CheckpointError("not a MICL checkpoint")
    if len(data) < 12:
        raise CheckpointError("truncated checkpoint header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = bytes(data[pos:pos + nlen]).decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", data, pos)
            pos += 8 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * size > len(data):
                raise CheckpointError(f"truncated payload for {name!r}")
            out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(dims).astype(np.float64)
            pos += 8 * size
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    if pos != len(data):
        raise CheckpointError("trailing bytes after last tensor")
    return out


def save(path, tensors):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
