"""HTTP surface over the engine.

Endpoints:
    POST /images                  body: PNG/PPM bytes -> {id, bpp, psnr}
    POST /search?k=&thr=          body: PNG/PPM bytes -> {hits, bpp, ...}
    GET  /images/{id}?decode=     -> PNG bytes or raw "LICB" bytes
    GET  /stats                   -> database + index statistics

The CLI and these endpoints call the same Engine methods, so core outputs
(ids, distances, bitstream bytes) are byte-identical between the two.
"""
from __future__ import annotations

import base64
import math

from fastapi import FastAPI, HTTPException, Query, Request, Response

from .engine import Engine
from .errors import CorruptStream, RecordNotFound


def _json_psnr(value: float):
    return "inf" if math.isinf(value) else value


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="latentsearch", version="0.1.0")
    app.state.engine = engine

    @app.post("/images")
    async def post_image(request: Request):
        body = await request.body()
        try:
            out = engine.ingest(body)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except OSError as exc:
            raise HTTPException(status_code=500, detail=f"storage failure: {exc}")
        out["psnr"] = _json_psnr(out["psnr"])
        return out

    @app.post("/search")
    async def post_search(
        request: Request,
        k: int = Query(default=None, ge=1),
        thr: float = Query(default=None, ge=0.0, le=2.0),
        include_bitstream: bool = False,
    ):
        body = await request.body()
        try:
            out = engine.query(
                body,
                k=k if k is not None else 5,
                thr=thr,
                include_bitstream=include_bitstream,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if "bitstream" in out:
            out["bitstream"] = base64.b64encode(out["bitstream"]).decode("ascii")
        return out

    @app.get("/images/{rec_id}")
    def get_image(rec_id: int, decode: bool = True):
        try:
            payload = engine.fetch(rec_id, decode=decode)
        except RecordNotFound:
            raise HTTPException(status_code=404, detail=f"record {rec_id} not found")
        except CorruptStream as exc:
            raise HTTPException(status_code=500, detail=f"stored record is corrupt: {exc}")
        media = "image/png" if decode else "application/octet-stream"
        return Response(content=payload, media_type=media)

    @app.get("/stats")
    def get_stats():
        return engine.stats()

    return app
