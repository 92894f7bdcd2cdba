"""Byte-oriented range coder with 16-bit quantized cumulative frequency tables.

This is the carry-less ("Russian") range coder: 32-bit state, one byte
renormalization, frequency totals fixed at 2^16. Encoding and decoding are
exact inverses for every in-range symbol sequence, which the codec relies
on for bit-identical reconstruction.

Every CDF used with the coder must be escape-free: strictly increasing
cumulative counts from 0 to 2^16, so every in-range symbol has frequency
at least 1 and is codable without fallbacks.
"""
from __future__ import annotations

from bisect import bisect_right
from typing import Sequence

import numpy as np

from .errors import SymbolRangeError, TruncatedStream, CorruptStream

PRECISION = 32
TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS          # every table's cumulative count sums to this
_TOP = 1 << (PRECISION - 8)
_BOTTOM = 1 << (PRECISION - 16)
_MASK = (1 << PRECISION) - 1


class CdfTable:
    """Quantized CDF over the integer symbols ``offset .. offset + n - 1``.

    ``cum`` has ``n + 1`` entries with ``cum[0] == 0`` and ``cum[n] == 2^16``,
    strictly increasing.
    """

    __slots__ = ("cum", "offset", "_cumlist")

    def __init__(self, cum: np.ndarray, offset: int = 0):
        cum = np.asarray(cum, dtype=np.int64)
        if cum.ndim != 1 or cum.shape[0] < 2:
            raise ValueError("cdf must be a 1-D array with at least 2 entries")
        if cum[0] != 0 or cum[-1] != TOTAL:
            raise ValueError(f"cdf must start at 0 and end at {TOTAL}, got [{cum[0]}, {cum[-1]}]")
        if not (np.diff(cum) >= 1).all():
            raise ValueError("cdf must be strictly increasing (frequency >= 1 per symbol)")
        self.cum = cum.astype(np.uint32)
        self.offset = int(offset)
        self._cumlist = cum.tolist()  # bisect on a list is much faster than on ndarray

    @property
    def n_symbols(self) -> int:
        return len(self._cumlist) - 1

    @property
    def min_value(self) -> int:
        return self.offset

    @property
    def max_value(self) -> int:
        return self.offset + self.n_symbols - 1

    def index_of(self, value: int) -> int:
        idx = value - self.offset
        if idx < 0 or idx >= self.n_symbols:
            raise SymbolRangeError(
                f"symbol {value} outside coded range [{self.min_value}, {self.max_value}]"
            )
        return idx

    def bits_of(self, value: int) -> float:
        """Information content -log2 P(value) under this table."""
        idx = self.index_of(value)
        freq = self._cumlist[idx + 1] - self._cumlist[idx]
        return float(TOTAL_BITS - np.log2(freq))


def quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Scale a probability vector to integer frequencies summing to 2^16.

    Every symbol gets frequency >= 1 (escape-free coding); the rounding
    remainder goes to the most probable symbol, so the result is a
    deterministic function of the input.
    """
    p = np.asarray(pmf, dtype=np.float64)
    n = p.shape[0]
    if n < 1 or n > TOTAL // 2:
        raise ValueError(f"pmf length {n} not in [1, {TOTAL // 2}]")
    p = np.clip(p, 0.0, None)
    s = p.sum()
    if not np.isfinite(s) or s <= 0.0:
        p = np.ones(n)
        s = float(n)
    freq = np.floor(p / s * (TOTAL - n)).astype(np.int64) + 1
    freq[np.argmax(p)] += TOTAL - int(freq.sum())
    return freq.astype(np.uint32)


def cdf_from_pmf(pmf: np.ndarray, offset: int = 0) -> CdfTable:
    freq = quantize_pmf(pmf)
    cum = np.zeros(len(freq) + 1, dtype=np.int64)
    np.cumsum(freq, out=cum[1:])
    return CdfTable(cum, offset)


def range_encode(
    values: Sequence[int],
    tables: Sequence[CdfTable],
    table_ids: Sequence[int] | None = None,
) -> bytes:
    """Encode ``values`` where ``values[i]`` uses ``tables[table_ids[i]]``.

    With ``table_ids`` omitted, all symbols use ``tables[0]``. Raises
    SymbolRangeError when a value falls outside its table.
    """
    n = len(values)
    if table_ids is None:
        table_ids = [0] * n
    if len(table_ids) != n:
        raise ValueError(f"{n} values but {len(table_ids)} table ids")

    cums = [t._cumlist for t in tables]
    offsets = [t.offset for t in tables]
    nsyms = [t.n_symbols for t in tables]

    out = bytearray()
    low = 0
    rng = _MASK
    for i in range(n):
        tid = table_ids[i]
        cum = cums[tid]
        idx = values[i] - offsets[tid]
        if idx < 0 or idx >= nsyms[tid]:
            raise SymbolRangeError(
                f"symbol {values[i]} at position {i} outside coded range "
                f"[{offsets[tid]}, {offsets[tid] + nsyms[tid] - 1}]"
            )
        r = rng >> TOTAL_BITS
        low += cum[idx] * r
        rng = (cum[idx + 1] - cum[idx]) * r
        while True:
            if (low ^ (low + rng)) < _TOP:
                out.append((low >> 24) & 0xFF)
                low = (low << 8) & _MASK
                rng <<= 8
            elif rng < _BOTTOM:
                rng = ((1 << PRECISION) - low) & (_BOTTOM - 1)
                out.append((low >> 24) & 0xFF)
                low = (low << 8) & _MASK
                rng <<= 8
            else:
                break
    for _ in range(4):
        out.append((low >> 24) & 0xFF)
        low = (low << 8) & _MASK
    return bytes(out)


def range_decode(
    data: bytes,
    tables: Sequence[CdfTable],
    count: int,
    table_ids: Sequence[int] | None = None,
) -> list[int]:
    """Decode exactly ``count`` symbols; the exact inverse of range_encode.

    Raises TruncatedStream when the payload is shorter than the decode
    needs, and CorruptStream when the coder state leaves the valid region.
    """
    if table_ids is None:
        table_ids = [0] * count
    if len(table_ids) != count:
        raise ValueError(f"count {count} but {len(table_ids)} table ids")
    if count == 0:
        return []
    if len(data) < 4:
        raise TruncatedStream(f"payload of {len(data)} bytes is too short for coder state")

    cums = [t._cumlist for t in tables]
    offsets = [t.offset for t in tables]

    pos = 4
    state = int.from_bytes(data[:4], "big")
    low = 0
    rng = _MASK
    size = len(data)
    values = []
    for i in range(count):
        tid = table_ids[i]
        cum = cums[tid]
        r = rng >> TOTAL_BITS
        dv = (state - low) // r
        if dv >= TOTAL:
            raise CorruptStream(f"decoder state outside frequency span at symbol {i}")
        idx = bisect_right(cum, dv) - 1
        values.append(idx + offsets[tid])
        low += cum[idx] * r
        rng = (cum[idx + 1] - cum[idx]) * r
        while True:
            if (low ^ (low + rng)) < _TOP:
                if pos >= size:
                    raise TruncatedStream(f"payload exhausted at symbol {i}")
                state = ((state << 8) | data[pos]) & _MASK
                pos += 1
                low = (low << 8) & _MASK
                rng <<= 8
            elif rng < _BOTTOM:
                rng = ((1 << PRECISION) - low) & (_BOTTOM - 1)
                if pos >= size:
                    raise TruncatedStream(f"payload exhausted at symbol {i}")
                state = ((state << 8) | data[pos]) & _MASK
                pos += 1
                low = (low << 8) & _MASK
                rng <<= 8
            else:
                break
    return values
