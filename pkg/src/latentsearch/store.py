"""Unified database: one append-only log holding, per image, the
entropy-coded bitstream and the search embedding.

File layout (little-endian), preceded by an 8-byte manifest:

    manifest: magic "LICD" (4B) | version u8 | default codec tag u8 | dim u16
    record:   rec_len u32 | id u64 | w u16 | h u16 | codec_tag u8
              | embed_len u32 | embed_bytes | bs_len u32 | bs_bytes | crc32 u32

``rec_len`` counts every byte after itself (id through crc32). The CRC
covers the body between rec_len and the CRC field, so a torn or corrupted
tail record is detected on open and the database keeps exactly the
checksum-valid prefix.

Writes are serialized through one lock and flushed+fsynced before put
returns; readers see a record only after it is fully durable.
"""
from __future__ import annotations

import os
import struct
import threading
import time
import warnings
import zlib
from dataclasses import dataclass

import numpy as np

from .container import inspect_header
from .embcodec import (
    NAME_OF,
    TAG_OF,
    FrequencyModel,
    compress_embedding,
    count_symbols,
    decompress_embedding,
    fixed_point_encode,
)
from .errors import CorruptStream, RecordNotFound, UnknownTableVersion

MANIFEST_MAGIC = b"LICD"
MANIFEST_VERSION = 1
_MANIFEST = struct.Struct("<4sBBH")
_REC_HEAD = struct.Struct("<QHHBI")  # id, w, h, codec_tag, embed_len
_U32 = struct.Struct("<I")

DEFAULT_REBUILD_INTERVAL = 10_000
NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class ImageRecord:
    """One row of the unified database."""

    id: int
    bitstream: bytes
    embedding: np.ndarray
    embed_codec_tag: str
    created_at: float
    width: int
    height: int


class UnifiedDb:
    """Append-only image+embedding log with crash-safe reopen.

    ``created_at`` is tracked for records written in this session; the
    record wire format does not persist it, so records loaded from disk
    report 0.0.
    """

    def __init__(
        self,
        path,
        dim: int | None = None,
        default_codec: str = "raw",
        rebuild_interval: int = DEFAULT_REBUILD_INTERVAL,
    ):
        if default_codec not in TAG_OF:
            raise ValueError(f"unknown embedding codec tag {default_codec!r}")
        self.path = os.fspath(path)
        self.rebuild_interval = int(rebuild_interval)
        self._lock = threading.RLock()
        self._offsets: dict[int, int] = {}
        self._created: dict[int, float] = {}
        self._max_id = 0
        self._hi_counts = np.zeros(256, dtype=np.int64)
        self._lo_counts = np.zeros(256, dtype=np.int64)

        exists = os.path.exists(self.path) and os.path.getsize(self.path) > 0
        if exists:
            self._file = open(self.path, "r+b")
            self._read_manifest()
        else:
            if dim is None:
                raise ValueError("creating a new database requires the embedding dim")
            self.dim = int(dim)
            self.default_codec = default_codec
            self._file = open(self.path, "w+b")
            self._file.write(
                _MANIFEST.pack(MANIFEST_MAGIC, MANIFEST_VERSION, TAG_OF[default_codec], self.dim)
            )
            self._file.flush()
            os.fsync(self._file.fileno())
        self._models: dict[int, FrequencyModel] = {0: FrequencyModel.default(self.dim)}
        if exists:
            self._scan()
        if dim is not None and int(dim) != self.dim:
            raise ValueError(f"database holds dim {self.dim}, requested {dim}")

    def _read_manifest(self):
        head = self._file.read(_MANIFEST.size)
        if len(head) < _MANIFEST.size:
            raise CorruptStream(f"database file shorter than the {_MANIFEST.size}-byte manifest")
        magic, version, tag, dim = _MANIFEST.unpack(head)
        if magic != MANIFEST_MAGIC:
            raise CorruptStream(f"bad database magic {magic!r}")
        if version != MANIFEST_VERSION:
            raise CorruptStream(f"unsupported database version {version}")
        if tag not in NAME_OF:
            raise CorruptStream(f"manifest carries unknown codec tag {tag}")
        self.default_codec = NAME_OF[tag]
        self.dim = dim

    # -- scanning / recovery ------------------------------------------------

    def _scan(self):
        """Rebuild the id map from disk, stopping at the first invalid record.

        Replays the frequency-table evolution so entropy payloads written
        before any rebuild decode identically after reopen.
        """
        f = self._file
        f.seek(0, os.SEEK_END)
        size = f.tell()
        pos = _MANIFEST.size
        n_seen = 0
        while pos < size:
            f.seek(pos)
            head = f.read(4)
            if len(head) < 4:
                warnings.warn(f"db {self.path}: torn record length at offset {pos}, truncating")
                break
            (rec_len,) = _U32.unpack(head)
            body = f.read(rec_len)
            if len(body) < rec_len or rec_len < _REC_HEAD.size + 8:
                warnings.warn(f"db {self.path}: torn record at offset {pos}, truncating")
                break
            stored_crc = _U32.unpack(body[-4:])[0]
            content = body[:-4]
            if zlib.crc32(content) != stored_crc:
                warnings.warn(f"db {self.path}: checksum failure at offset {pos}, truncating")
                break
            rec_id, w, h, tag, embed_len = _REC_HEAD.unpack_from(content, 0)
            rest = len(content) - _REC_HEAD.size
            if embed_len + 4 > rest or tag not in NAME_OF:
                warnings.warn(f"db {self.path}: malformed record at offset {pos}, truncating")
                break
            (bs_len,) = _U32.unpack_from(content, _REC_HEAD.size + embed_len)
            if _REC_HEAD.size + embed_len + 4 + bs_len != len(content):
                warnings.warn(f"db {self.path}: malformed record at offset {pos}, truncating")
                break
            embed_bytes = content[_REC_HEAD.size : _REC_HEAD.size + embed_len]
            try:
                emb = decompress_embedding(embed_bytes, NAME_OF[tag], self.dim, self._models)
            except UnknownTableVersion as exc:
                # checksum-valid record referencing a table we never built:
                # the caller reopened with a different rebuild_interval
                raise ValueError(
                    f"db {self.path}: {exc}; reopen with the rebuild_interval "
                    "the database was written with"
                ) from exc
            except (CorruptStream, ValueError) as exc:
                warnings.warn(f"db {self.path}: undecodable embedding at offset {pos} ({exc})")
                break
            self._account(emb, n_seen)
            n_seen += 1
            self._offsets[rec_id] = pos
            self._max_id = max(self._max_id, rec_id)
            pos += 4 + rec_len
        if pos < size:
            # drop the invalid tail so later appends land on a valid boundary
            f.truncate(pos)
            f.flush()

    def _account(self, embedding: np.ndarray, ordinal: int):
        """Update symbol statistics; snapshot a new table every rebuild_interval."""
        count_symbols(fixed_point_encode(embedding), self._hi_counts, self._lo_counts)
        if (ordinal + 1) % self.rebuild_interval == 0:
            version = len(self._models)
            if version < 256:
                self._models[version] = FrequencyModel.from_counts(
                    self._hi_counts + 1, self._lo_counts + 1, version
                )

    @property
    def _current_model(self) -> FrequencyModel:
        return self._models[len(self._models) - 1]

    # -- public operations ---------------------------------------------------

    def put(self, bitstream: bytes, embedding: np.ndarray, codec_tag: str | None = None) -> int:
        """Append one record; durable (flushed and fsynced) before returning."""
        tag_name = codec_tag or self.default_codec
        if tag_name not in TAG_OF:
            raise ValueError(f"unknown embedding codec tag {tag_name!r}")
        embedding = np.asarray(embedding, dtype=np.float32).ravel()
        if embedding.shape[0] != self.dim:
            raise ValueError(f"embedding dim {embedding.shape[0]} != database dim {self.dim}")
        norm = float(np.linalg.norm(embedding.astype(np.float64)))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"embedding norm {norm:.6f} not within {NORM_TOLERANCE} of 1")
        header = inspect_header(bitstream)  # validates the LICB magic too

        with self._lock:
            rec_id = self._max_id + 1
            embed_bytes = compress_embedding(embedding, tag_name, self._current_model)
            content = (
                _REC_HEAD.pack(rec_id, header["width"], header["height"],
                               TAG_OF[tag_name], len(embed_bytes))
                + embed_bytes
                + _U32.pack(len(bitstream))
                + bitstream
            )
            record = _U32.pack(len(content) + 4) + content + _U32.pack(zlib.crc32(content))
            f = self._file
            f.seek(0, os.SEEK_END)
            offset = f.tell()
            try:
                f.write(record)
                f.flush()
                os.fsync(f.fileno())
            except OSError:
                # roll the file back so a half-written tail cannot shadow
                # records appended after it; the db stays readable
                try:
                    f.truncate(offset)
                    f.flush()
                except OSError:
                    pass
                raise
            self._offsets[rec_id] = offset
            self._created[rec_id] = time.time()
            self._max_id = rec_id
            self._account(embedding, len(self._offsets) - 1)
            return rec_id

    def get(self, rec_id: int) -> ImageRecord:
        with self._lock:
            offset = self._offsets.get(rec_id)
            if offset is None:
                raise RecordNotFound(f"record id {rec_id} not found")
            f = self._file
            f.seek(offset)
            (rec_len,) = _U32.unpack(f.read(4))
            body = f.read(rec_len)
        content = body[:-4]
        rid, w, h, tag, embed_len = _REC_HEAD.unpack_from(content, 0)
        embed_bytes = content[_REC_HEAD.size : _REC_HEAD.size + embed_len]
        bs_bytes = content[_REC_HEAD.size + embed_len + 4 :]
        embedding = decompress_embedding(embed_bytes, NAME_OF[tag], self.dim, self._models)
        return ImageRecord(
            id=rid,
            bitstream=bytes(bs_bytes),
            embedding=embedding,
            embed_codec_tag=NAME_OF[tag],
            created_at=self._created.get(rid, 0.0),
            width=w,
            height=h,
        )

    def ids(self) -> list[int]:
        with self._lock:
            return sorted(self._offsets)

    def __len__(self) -> int:
        return len(self._offsets)

    def stats(self) -> dict:
        with self._lock:
            ids = sorted(self._offsets)
            total_bs = 0
            total_emb = 0
            bpps = []
            for rid in ids:
                rec = self.get(rid)
                total_bs += len(rec.bitstream)
                total_emb += int(rec.embedding.nbytes)
                bpps.append(8.0 * len(rec.bitstream) / (rec.width * rec.height))
        return {
            "record_count": len(ids),
            "total_bitstream_bytes": total_bs,
            "total_embedding_bytes": total_emb,
            "mean_bpp": float(np.mean(bpps)) if bpps else 0.0,
        }

    def close(self):
        with self._lock:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
