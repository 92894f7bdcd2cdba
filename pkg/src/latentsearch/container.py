"""The "LICB" bitstream container.

Little-endian layout, bit-exact:

    magic "LICB" (4B) | version u8 | model_id u8 | orig_w u16 | orig_h u16
    | pad_w u16 | pad_h u16 | z_len u32 | z_bytes | y_len u32 | y_bytes
    | crc32 u32

The CRC covers every byte before it, so any single-byte corruption is
detected before payload decoding is attempted.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .errors import ChecksumMismatch, MagicMismatch, TruncatedStream, VersionMismatch

MAGIC = b"LICB"
VERSION = 1

_FIXED = struct.Struct("<4sBBHHHH")  # through pad_h
_U32 = struct.Struct("<I")
_MIN_LEN = _FIXED.size + 4 + 4 + 4  # empty payloads + crc


@dataclass(frozen=True)
class Bitstream:
    """One encoded image: header fields plus the two entropy-coded payloads."""

    model_id: int
    orig_w: int
    orig_h: int
    pad_w: int
    pad_h: int
    z_bytes: bytes
    y_bytes: bytes
    version: int = VERSION

    def __post_init__(self):
        for name in ("orig_w", "orig_h", "pad_w", "pad_h"):
            v = getattr(self, name)
            if not (0 < v < 1 << 16):
                raise ValueError(f"{name}={v} does not fit in u16")
        if self.pad_w % 64 or self.pad_h % 64:
            raise ValueError(f"padded dims {self.pad_w}x{self.pad_h} must be multiples of 64")
        if self.pad_w < self.orig_w or self.pad_h < self.orig_h:
            raise ValueError("padded dims must be >= original dims")

    @property
    def payload_bytes(self) -> int:
        return len(self.z_bytes) + len(self.y_bytes)

    def to_bytes(self) -> bytes:
        head = _FIXED.pack(
            MAGIC, self.version, self.model_id,
            self.orig_w, self.orig_h, self.pad_w, self.pad_h,
        )
        body = (
            head
            + _U32.pack(len(self.z_bytes)) + self.z_bytes
            + _U32.pack(len(self.y_bytes)) + self.y_bytes
        )
        return body + _U32.pack(zlib.crc32(body))


def parse_bitstream(data: bytes) -> Bitstream:
    """Parse and fully validate a container; every failure mode is explicit."""
    if len(data) < _MIN_LEN:
        raise TruncatedStream(f"container is {len(data)} bytes, minimum is {_MIN_LEN}")
    magic, version, model_id, ow, oh, pw, ph = _FIXED.unpack_from(data, 0)
    if magic != MAGIC:
        raise MagicMismatch(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatch(f"unsupported container version {version}")

    pos = _FIXED.size
    (z_len,) = _U32.unpack_from(data, pos)
    pos += 4
    if pos + z_len + 4 + 4 > len(data):
        raise TruncatedStream("z payload length exceeds container size")
    z_bytes = data[pos : pos + z_len]
    pos += z_len
    (y_len,) = _U32.unpack_from(data, pos)
    pos += 4
    if pos + y_len + 4 != len(data):
        raise TruncatedStream("y payload length does not match container size")
    y_bytes = data[pos : pos + y_len]
    pos += y_len

    (stored_crc,) = _U32.unpack_from(data, pos)
    actual_crc = zlib.crc32(data[:pos])
    if stored_crc != actual_crc:
        raise ChecksumMismatch(f"crc 0x{actual_crc:08x} != stored 0x{stored_crc:08x}")

    return Bitstream(
        model_id=model_id, orig_w=ow, orig_h=oh, pad_w=pw, pad_h=ph,
        z_bytes=bytes(z_bytes), y_bytes=bytes(y_bytes), version=version,
    )


def inspect_header(data: bytes) -> dict:
    """Read (width, height, model id, ...) without touching the payloads."""
    if len(data) < _FIXED.size:
        raise TruncatedStream(f"container is {len(data)} bytes, header needs {_FIXED.size}")
    magic, version, model_id, ow, oh, pw, ph = _FIXED.unpack_from(data, 0)
    if magic != MAGIC:
        raise MagicMismatch(f"bad magic {magic!r}, expected {MAGIC!r}")
    return {
        "version": version,
        "model_id": model_id,
        "width": ow,
        "height": oh,
        "padded_width": pw,
        "padded_height": ph,
    }
