"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic        8 bytes   b"MTAGCKPT"
    version      u32       FORMAT_VERSION
    header_len   u32       byte length of the header
    header       UTF-8 JSON, keys sorted, compact separators
    n_entries    u32
    n_entries times:
        name_len u16, name (UTF-8)
        dtype    u8        1 = float64
        ndim     u8
        shape    ndim x u64
        payload  prod(shape) x float64, row-major

The header echoes the model configuration and carries the vocabulary, so a
checkpoint is enough on its own to tag text.  Nothing time-dependent goes in
here; identical parameters always produce identical bytes.
"""

import json
import struct

import numpy as np

from ..errors import CheckpointError

MAGIC = b"MTAGCKPT"
FORMAT_VERSION = 1
DTYPE_F64 = 1


def dumps(header, entries):
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header_bytes)), header_bytes]
    entries = list(entries)
    parts.append(struct.pack("<I", len(entries)))
    for name, array in entries:
        array = np.asarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", DTYPE_F64, array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


def loads(blob):
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(8)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, header_len = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(bytes(take(header_len)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    entries = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        dtype, ndim = struct.unpack("<BB", take(2))
        if dtype != DTYPE_F64:
            raise CheckpointError(f"entry {name!r}: unsupported dtype code {dtype}")
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n = int(np.prod(shape, dtype=np.int64))
        payload = np.frombuffer(bytes(take(8 * n)), dtype="<f8").astype(np.float64)
        entries[name] = payload.reshape(shape)
    if pos != len(view):
        raise CheckpointError("trailing bytes after last entry")
    return header, entries


def save(path, header, entries):
    with open(path, "wb") as fh:
        fh.write(dumps(header, entries))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
