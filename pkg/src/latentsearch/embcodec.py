"""Pluggable embedding compression.

All lossy-free strategies share one 16-bit fixed-point representation of
the unit-interval coordinates, so every strategy is exactly invertible at
fixed point and their sizes are directly comparable:

    raw     32-bit floats verbatim (no quantization)
    entropy fixed point, then the range coder over per-database learned
            hi/lo byte frequency tables
    fastlz  fixed point, then a fast LZ-family general-purpose compressor
            (DEFLATE at level 1)

Entropy payloads carry a one-byte frequency-table version so records
written before a table rebuild stay decodable.
"""
from __future__ import annotations

import time
import zlib
from dataclasses import dataclass

import numpy as np

from .entropy import discretized_gaussian_pmf
from .errors import CorruptStream, TruncatedStream, UnknownTableVersion
from .rangecoder import CdfTable, cdf_from_pmf, range_decode, range_encode

STRATEGIES = ("raw", "entropy", "fastlz")
TAG_OF = {"raw": 0, "entropy": 1, "fastlz": 2}
NAME_OF = {v: k for k, v in TAG_OF.items()}

FIXED_SCALE = 32767  # int16 fixed point over [-1, 1]


def fixed_point_encode(vec: np.ndarray) -> np.ndarray:
    """Quantize [-1, 1] coordinates to int16, rounding half away from zero."""
    v = np.clip(np.asarray(vec, dtype=np.float64), -1.0, 1.0) * FIXED_SCALE
    return np.copysign(np.floor(np.abs(v) + 0.5), v).astype(np.int16)


def fixed_point_decode(q: np.ndarray) -> np.ndarray:
    return (np.asarray(q, dtype=np.float64) / FIXED_SCALE).astype(np.float32)


def _split_bytes(q: np.ndarray) -> np.ndarray:
    """int16 values -> interleaved (hi, lo) byte symbols, biased to [0, 65535]."""
    u = q.astype(np.int64) + 32768
    out = np.empty(2 * len(u), dtype=np.int64)
    out[0::2] = u >> 8
    out[1::2] = u & 0xFF
    return out


def _join_bytes(symbols: list[int]) -> np.ndarray:
    s = np.asarray(symbols, dtype=np.int64)
    u = (s[0::2] << 8) | s[1::2]
    return (u - 32768).astype(np.int16)


@dataclass(frozen=True)
class FrequencyModel:
    """Symbol statistics for the entropy strategy: one table per byte lane."""

    version: int
    hi_table: CdfTable
    lo_table: CdfTable

    @classmethod
    def from_counts(cls, hi_counts: np.ndarray, lo_counts: np.ndarray, version: int):
        return cls(
            version=version,
            hi_table=cdf_from_pmf(np.asarray(hi_counts, np.float64)),
            lo_table=cdf_from_pmf(np.asarray(lo_counts, np.float64)),
        )

    @classmethod
    def default(cls, dim: int) -> "FrequencyModel":
        """Analytic prior: unit-vector coordinates are roughly N(0, 1/sqrt(dim))."""
        sigma_bins = max(FIXED_SCALE / max(np.sqrt(dim), 1.0) / 256.0, 0.3)
        hi = discretized_gaussian_pmf(128.0, sigma_bins, 0, 255)
        lo = np.ones(256)
        return cls.from_counts(hi, lo, version=0)


def count_symbols(q: np.ndarray, hi_counts: np.ndarray, lo_counts: np.ndarray) -> None:
    """Accumulate hi/lo byte histograms of one fixed-point embedding in place."""
    sym = _split_bytes(q)
    np.add.at(hi_counts, sym[0::2], 1)
    np.add.at(lo_counts, sym[1::2], 1)


def compress_embedding(
    e: np.ndarray, strategy: str, model: FrequencyModel | None = None
) -> bytes:
    """Encode an embedding under the named strategy."""
    e = np.asarray(e, dtype=np.float32).ravel()
    if strategy == "raw":
        return e.astype("<f4").tobytes()
    q = fixed_point_encode(e)
    if strategy == "fastlz":
        return zlib.compress(q.astype("<i2").tobytes(), 1)
    if strategy == "entropy":
        if model is None:
            model = FrequencyModel.default(len(e))
        if not 0 <= model.version < 256:
            raise ValueError(f"frequency model version {model.version} does not fit in u8")
        sym = _split_bytes(q).tolist()
        ids = [0, 1] * len(q)
        coded = range_encode(sym, [model.hi_table, model.lo_table], ids)
        return bytes([model.version]) + coded
    raise ValueError(f"unknown embedding codec strategy {strategy!r}")


def decompress_embedding(
    data: bytes,
    strategy: str,
    dim: int,
    models: dict[int, FrequencyModel] | None = None,
) -> np.ndarray:
    """Decode a payload back to float32 coordinates.

    raw reproduces the floats exactly; entropy and fastlz reproduce the
    fixed-point values exactly.
    """
    if strategy == "raw":
        if len(data) != 4 * dim:
            raise TruncatedStream(f"raw payload is {len(data)} bytes, expected {4 * dim}")
        return np.frombuffer(data, dtype="<f4").astype(np.float32)
    if strategy == "fastlz":
        try:
            plain = zlib.decompress(data)
        except zlib.error as exc:
            raise CorruptStream(f"fastlz payload failed to inflate: {exc}") from exc
        if len(plain) != 2 * dim:
            raise TruncatedStream(f"fastlz payload inflates to {len(plain)} bytes, expected {2 * dim}")
        return fixed_point_decode(np.frombuffer(plain, dtype="<i2"))
    if strategy == "entropy":
        if len(data) < 1:
            raise TruncatedStream("entropy payload is empty")
        version = data[0]
        if models is None:
            models = {0: FrequencyModel.default(dim)}
        model = models.get(version)
        if model is None:
            raise UnknownTableVersion(
                f"entropy payload uses unknown frequency-table version {version}"
            )
        ids = [0, 1] * dim
        sym = range_decode(data[1:], [model.hi_table, model.lo_table], 2 * dim, ids)
        return fixed_point_decode(_join_bytes(sym))
    raise ValueError(f"unknown embedding codec strategy {strategy!r}")


def bench_strategies(
    embeddings: np.ndarray, model: FrequencyModel | None = None
) -> list[dict]:
    """Compress/decompress every embedding under every strategy and time it.

    Returns one row per strategy: total payload bytes plus mean per-call
    encode/decode time in microseconds. Round-trip equality is asserted,
    at fixed point for the non-raw strategies.
    """
    embeddings = np.asarray(embeddings, dtype=np.float32)
    n, dim = embeddings.shape
    if model is None:
        model = FrequencyModel.default(dim)
    models = {model.version: model}
    rows = []
    for strategy in STRATEGIES:
        payloads = []
        t0 = time.perf_counter()
        for e in embeddings:
            payloads.append(compress_embedding(e, strategy, model))
        t1 = time.perf_counter()
        for e, p in zip(embeddings, payloads):
            out = decompress_embedding(p, strategy, dim, models)
            if strategy == "raw":
                if not np.array_equal(out, e):
                    raise AssertionError("raw strategy failed exact round trip")
            else:
                if not np.array_equal(fixed_point_encode(out), fixed_point_encode(e)):
                    raise AssertionError(f"{strategy} strategy failed fixed-point round trip")
        t2 = time.perf_counter()
        rows.append(
            {
                "strategy": strategy,
                "total_bytes": sum(len(p) for p in payloads),
                "encode_us": (t1 - t0) / n * 1e6,
                "decode_us": (t2 - t1) / n * 1e6,
            }
        )
    return rows


def format_bench(rows: list[dict]) -> str:
    lines = [f"{'strategy':<10} {'total_bytes':>12} {'encode_us':>10} {'decode_us':>10}"]
    for r in rows:
        lines.append(
            f"{r['strategy']:<10} {r['total_bytes']:>12d} "
            f"{r['encode_us']:>10.1f} {r['decode_us']:>10.1f}"
        )
    return "\n".join(lines)
