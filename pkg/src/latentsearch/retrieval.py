"""Embedding index and exact top-k cosine search.

The gallery is small enough (thousands) that an exact full scan is both
fast and testable against a brute-force oracle, so no approximate index
is used. Distances are true cosine distances (inputs are normalized
inside the scan), which makes the returned ordering invariant to any
positive rescaling of the stored embeddings or the query.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .store import UnifiedDb

NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class EmbeddingIndex:
    """N x D matrix of embeddings; row i belongs to record ids[i]."""

    matrix: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float32)
        ids = np.asarray(self.ids, dtype=np.int64)
        if m.ndim != 2:
            raise ValueError(f"index matrix must be 2-D, got shape {m.shape}")
        if ids.shape != (m.shape[0],):
            raise ValueError(f"{m.shape[0]} rows but {ids.shape[0]} ids")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("record ids must be distinct")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def with_row(self, rec_id: int, embedding: np.ndarray) -> "EmbeddingIndex":
        """A new index with one appended row; existing rows are shared."""
        e = np.asarray(embedding, dtype=np.float32).reshape(1, -1)
        if len(self) and e.shape[1] != self.dim:
            raise ValueError(f"embedding dim {e.shape[1]} != index dim {self.dim}")
        return EmbeddingIndex(
            matrix=np.concatenate([self.matrix, e], axis=0),
            ids=np.concatenate([self.ids, np.asarray([rec_id], dtype=np.int64)]),
        )

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingIndex":
        return cls(matrix=np.zeros((0, dim), dtype=np.float32), ids=np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class QueryParams:
    k: int = 5
    thr: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.thr is not None and not (0.0 <= self.thr <= 2.0):
            raise ValueError(f"thr must be in [0, 2] or None, got {self.thr}")


@dataclass(frozen=True)
class SearchResult:
    hits: list[tuple[int, float]] = field(default_factory=list)
    query_time_us: float = 0.0


def build_index(db: UnifiedDb) -> EmbeddingIndex:
    """One row per record in id order; rows failing norm validation are skipped."""
    rows = []
    ids = []
    skipped = 0
    for rec_id in db.ids():
        rec = db.get(rec_id)
        norm = float(np.linalg.norm(rec.embedding.astype(np.float64)))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            warnings.warn(f"record {rec_id}: embedding norm {norm:.6f} out of tolerance, skipped")
            skipped += 1
            continue
        rows.append(rec.embedding)
        ids.append(rec_id)
    if not rows:
        return EmbeddingIndex.empty(db.dim)
    index = EmbeddingIndex(matrix=np.stack(rows), ids=np.asarray(ids, dtype=np.int64))
    if skipped:
        warnings.warn(f"index built with {skipped} records skipped")
    return index


def search(index: EmbeddingIndex, e: np.ndarray, p: QueryParams) -> SearchResult:
    """The k nearest records by cosine distance, ascending, ties to smaller id.

    Entries with distance > thr are removed when thr is set.
    """
    t0 = time.perf_counter()
    q = np.asarray(e, dtype=np.float64).ravel()
    if len(index) == 0:
        return SearchResult(hits=[], query_time_us=(time.perf_counter() - t0) * 1e6)
    if q.shape[0] != index.dim:
        raise ValueError(f"query dim {q.shape[0]} != index dim {index.dim}")
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        raise ValueError("query embedding has zero norm")
    m = index.matrix.astype(np.float64)
    # row-wise pairwise reduction, not BLAS: identical rows must produce
    # bit-identical distances or the smaller-id tie-break is meaningless
    prod = m * (q / qn)[None, :]
    sims = prod.sum(axis=1)
    norms = np.sqrt((m * m).sum(axis=1))
    sims = sims / norms
    dists = 1.0 - np.clip(sims, -1.0, 1.0)

    order = np.lexsort((index.ids, dists))[: p.k]
    hits = [(int(index.ids[i]), float(dists[i])) for i in order]
    if p.thr is not None:
        hits = [(i, d) for i, d in hits if d <= p.thr]
    return SearchResult(hits=hits, query_time_us=(time.perf_counter() - t0) * 1e6)


def recall_at_k(
    index: EmbeddingIndex, queries: np.ndarray, oracle_ids: list[int], k: int
) -> float:
    """Fraction of queries whose oracle id appears in their top-k."""
    queries = np.asarray(queries, dtype=np.float32)
    if queries.ndim != 2 or queries.shape[0] == 0:
        raise ValueError("queries must be a non-empty 2-D array")
    if queries.shape[0] != len(oracle_ids):
        raise ValueError(f"{queries.shape[0]} queries but {len(oracle_ids)} oracle ids")
    hits = 0
    for q, oid in zip(queries, oracle_ids):
        result = search(index, q, QueryParams(k=k))
        if any(i == oid for i, _ in result.hits):
            hits += 1
    return hits / queries.shape[0]


def hit_total(hits: int, total: int) -> str:
    """Table-style "hit/total" cell, e.g. "7/24"."""
    return f"{hits}/{total}"


def format_eval_report(rows: list[dict]) -> str:
    """Plain-text evaluation table: (k, bpp, psnr, hit/total, recall@1, recall@5)."""
    header = (
        f"{'k':>4} {'bpp':>8} {'psnr':>8} {'hit/total':>12} {'recall@1':>9} {'recall@5':>9}"
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        psnr_s = "inf" if r["psnr"] == float("inf") else f"{r['psnr']:.2f}"
        lines.append(
            f"{r['k']:>4} {r['bpp']:>8.4f} {psnr_s:>8} {r['hit_total']:>12} "
            f"{r['recall_at_1']:>9} {r['recall_at_5']:>9}"
        )
    return "\n".join(lines)
