"""Reader/writer for "LICE" teacher-embedding files.

Layout (little-endian):

    magic "LICE" (4B) | count u32 | dim u32
    then per entry: name_len u16 | name utf-8 | dim x f32

The trainer emits these; the engine's evaluation harness consumes them as
the retrieval oracle.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import MagicMismatch, TruncatedStream

MAGIC = b"LICE"
_HEAD = struct.Struct("<4sII")
_NLEN = struct.Struct("<H")


def write_embedding_file(path, entries: dict[str, np.ndarray]) -> None:
    if not entries:
        raise ValueError("refusing to write an empty embedding file")
    dims = {np.asarray(v).size for v in entries.values()}
    if len(dims) != 1:
        raise ValueError(f"entries have inconsistent dims: {sorted(dims)}")
    dim = dims.pop()
    with open(path, "wb") as f:
        f.write(_HEAD.pack(MAGIC, len(entries), dim))
        for name, vec in entries.items():
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"entry name too long: {name[:40]}...")
            f.write(_NLEN.pack(len(raw)))
            f.write(raw)
            f.write(np.asarray(vec, dtype="<f4").ravel().tobytes())


def read_embedding_file(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEAD.size:
        raise TruncatedStream(f"embedding file is {len(data)} bytes, header needs {_HEAD.size}")
    magic, count, dim = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise MagicMismatch(f"bad magic {magic!r}, expected {MAGIC!r}")
    pos = _HEAD.size
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + _NLEN.size > len(data):
            raise TruncatedStream("embedding file ends inside an entry header")
        (nlen,) = _NLEN.unpack_from(data, pos)
        pos += _NLEN.size
        end = pos + nlen + 4 * dim
        if end > len(data):
            raise TruncatedStream("embedding file ends inside an entry")
        name = data[pos : pos + nlen].decode("utf-8")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos + nlen).copy()
        entries[name] = vec
        pos = end
    return entries
