"""The operational pipeline: ingest = compress + embed, query = compress-path
embedding + search, fetch = decode.

One Engine owns the database, the loaded weights, and an in-memory index
snapshot. Queries run against an immutable snapshot; ingests are
serialized and swap in a new snapshot atomically, so a record is either
fully searchable or not visible at all.
"""
from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapter import embed_latent
from .codec import decode_image, encode_image
from .imageio import decode_image_bytes, encode_png
from .retrieval import (
    EmbeddingIndex,
    QueryParams,
    build_index,
    hit_total,
    format_eval_report,
    search,
)
from .store import UnifiedDb
from .teacherfile import read_embedding_file
from .weights import EngineModel, WeightArchive, load_model

ENV_DB = "LATENTSEARCH_DB"
MIN_IMAGE_SIDE = 64  # below this the adapter has no 4x4 latent to work with


@dataclass
class ServiceConfig:
    db_path: str
    weights_path: str
    host: str = "127.0.0.1"
    port: int = 8321
    default_k: int = 5
    default_thr: float | None = None
    embed_codec: str = "raw"

    @classmethod
    def resolve_db(cls, explicit: str | None) -> str:
        path = explicit or os.environ.get(ENV_DB)
        if not path:
            raise ValueError(f"no database path: pass --db or set {ENV_DB}")
        return path


class Engine:
    def __init__(self, db: UnifiedDb, model: EngineModel, embed_codec: str | None = None):
        if db.dim != model.embed_dim:
            raise ValueError(f"database dim {db.dim} != model embedding dim {model.embed_dim}")
        self.db = db
        self.model = model
        self.embed_codec = embed_codec or db.default_codec
        self._lock = threading.Lock()
        self._index = build_index(db)

    @classmethod
    def open(cls, db_path, weights_path, embed_codec: str | None = None) -> "Engine":
        model = load_model(WeightArchive.load(weights_path))
        db = UnifiedDb(db_path, dim=model.embed_dim, default_codec=embed_codec or "raw")
        return cls(db, model, embed_codec)

    @property
    def index(self) -> EmbeddingIndex:
        return self._index

    # -- pipeline stages ------------------------------------------------------

    def _compress_and_embed(self, image_bytes: bytes):
        image = decode_image_bytes(image_bytes)
        _, _, h, w = image.shape
        if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
            raise ValueError(
                f"image {w}x{h} below the {MIN_IMAGE_SIDE}-pixel minimum side"
            )
        m = self.model
        result = encode_image(image, m.codec, m.gaussian, m.prior, m.model_id)
        embedding = embed_latent(result.y_hat, m.adapter)
        return result, embedding

    def ingest(self, image_bytes: bytes) -> dict:
        """Compress, embed, store; the record is searchable on return."""
        result, embedding = self._compress_and_embed(image_bytes)
        with self._lock:
            rec_id = self.db.put(result.bitstream.to_bytes(), embedding, self.embed_codec)
            self._index = self._index.with_row(rec_id, embedding)
        return {"id": rec_id, "bpp": result.bpp, "psnr": result.psnr}

    def query(
        self,
        image_bytes: bytes,
        k: int = 5,
        thr: float | None = None,
        include_bitstream: bool = False,
    ) -> dict:
        """One pass: the query's compression is also its embedding extraction."""
        result, embedding = self._compress_and_embed(image_bytes)
        res = search(self._index, embedding, QueryParams(k=k, thr=thr))
        out = {
            "hits": [{"id": i, "distance": d} for i, d in res.hits],
            "bpp": result.bpp,
            "query_time_us": res.query_time_us,
        }
        if include_bitstream:
            out["bitstream"] = result.bitstream.to_bytes()
        return out

    def fetch(self, rec_id: int, decode: bool = True) -> bytes:
        """PNG of the reconstruction, or the raw "LICB" container."""
        rec = self.db.get(rec_id)
        if not decode:
            return rec.bitstream
        m = self.model
        image = decode_image(rec.bitstream, m.codec, m.gaussian, m.prior, m.model_id)
        return encode_png(image)

    def stats(self) -> dict:
        st = self.db.stats()
        st["index_rows"] = len(self._index)
        st["embed_dim"] = self.model.embed_dim
        st["model_id"] = self.model.model_id
        return st

    # -- evaluation harness ----------------------------------------------------

    def eval_run(
        self,
        query_dir,
        ks: tuple[int, ...] = (1, 5),
        teacher_queries_path=None,
        teacher_gallery_path=None,
        gallery_map: dict[str, int] | None = None,
    ) -> tuple[str, list[dict]]:
        """Table-style evaluation over a directory of query images.

        The oracle id for a query is its nearest gallery record under the
        teacher embeddings. Without teacher files only bpp/psnr are
        reported and the hit columns read "n/a".
        """
        qdir = Path(query_dir)
        files = sorted(
            p for p in qdir.iterdir() if p.suffix.lower() in (".png", ".ppm")
        ) if qdir.is_dir() else []
        if not files:
            raise ValueError(f"no query images (.png/.ppm) in {query_dir}")

        oracle_ids: list[int] | None = None
        if teacher_queries_path and teacher_gallery_path:
            t_q = read_embedding_file(teacher_queries_path)
            t_g = read_embedding_file(teacher_gallery_path)
            gallery_ids = []
            gallery_vecs = []
            for name, vec in t_g.items():
                rid = gallery_map.get(name) if gallery_map else int(name)
                if rid is None:
                    raise ValueError(f"gallery teacher entry {name!r} missing from map")
                gallery_ids.append(int(rid))
                gallery_vecs.append(vec)
            gmat = np.stack(gallery_vecs).astype(np.float64)
            gmat /= np.linalg.norm(gmat, axis=1, keepdims=True)
            oracle_ids = []
            for p in files:
                vec = t_q.get(p.name)
                if vec is None:
                    raise ValueError(f"query {p.name!r} missing from teacher file")
                v = np.asarray(vec, np.float64)
                v /= np.linalg.norm(v)
                sims = gmat @ v
                best = int(np.argmax(sims))  # ties resolve to the first entry
                oracle_ids.append(gallery_ids[best])

        per_query = []
        for p in files:
            with open(p, "rb") as f:
                data = f.read()
            result, embedding = self._compress_and_embed(data)
            res = search(self._index, embedding, QueryParams(k=max(max(ks), 5)))
            per_query.append((result.bpp, result.psnr, [i for i, _ in res.hits]))

        total = len(files)
        mean_bpp = float(np.mean([b for b, _, _ in per_query]))
        finite_psnrs = [p for _, p, _ in per_query if not math.isinf(p)]
        mean_psnr = float(np.mean(finite_psnrs)) if finite_psnrs else float("inf")

        def hits_at(k: int) -> int:
            assert oracle_ids is not None
            return sum(
                1 for (_b, _p, ids), oid in zip(per_query, oracle_ids) if oid in ids[:k]
            )

        rows = []
        for k in ks:
            if oracle_ids is None:
                ht = r1 = r5 = "n/a"
            else:
                ht = hit_total(hits_at(k), total)
                r1 = f"{hits_at(1) / total:.3f}"
                r5 = f"{hits_at(5) / total:.3f}"
            rows.append(
                {
                    "k": k,
                    "bpp": mean_bpp,
                    "psnr": mean_psnr,
                    "hit_total": ht,
                    "recall_at_1": r1,
                    "recall_at_5": r5,
                }
            )
        return format_eval_report(rows), rows
