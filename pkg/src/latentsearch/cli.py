"""Command-line interface.

Subcommands: ingest, query, fetch, serve, eval, compress, decompress,
codec-bench, init-weights. The database path falls back to the
LATENTSEARCH_DB environment variable.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .codec import decode_image, encode_image
from .container import inspect_header
from .embcodec import STRATEGIES, bench_strategies, format_bench
from .engine import ENV_DB, Engine, ServiceConfig
from .errors import LatentSearchError, RecordNotFound
from .imageio import encode_png, load_image
from .weights import WeightArchive, init_random_archive, load_model


def _add_common(p: argparse.ArgumentParser, db: bool = True, weights: bool = True):
    if db:
        p.add_argument("--db", default=None, help=f"database path (default: ${ENV_DB})")
    if weights:
        p.add_argument("--weights", required=True, help="LICW weight archive path")


def _engine(args) -> Engine:
    db_path = ServiceConfig.resolve_db(args.db)
    return Engine.open(db_path, args.weights, embed_codec=getattr(args, "embed_codec", None))


def _print_json(obj):
    def default(o):
        if isinstance(o, float) and math.isinf(o):
            return "inf"
        raise TypeError(type(o))

    json.dump(obj, sys.stdout, default=default)
    sys.stdout.write("\n")


def cmd_ingest(args) -> int:
    eng = _engine(args)
    for path in args.images:
        with open(path, "rb") as f:
            out = eng.ingest(f.read())
        out["file"] = str(path)
        if math.isinf(out["psnr"]):
            out["psnr"] = "inf"
        _print_json(out)
    return 0


def cmd_query(args) -> int:
    eng = _engine(args)
    with open(args.image, "rb") as f:
        out = eng.query(
            f.read(), k=args.k, thr=args.thr, include_bitstream=bool(args.save_bitstream)
        )
    if args.save_bitstream:
        with open(args.save_bitstream, "wb") as f:
            f.write(out.pop("bitstream"))
    _print_json(out)
    return 0


def cmd_fetch(args) -> int:
    eng = _engine(args)
    payload = eng.fetch(args.id, decode=not args.raw)
    with open(args.out, "wb") as f:
        f.write(payload)
    print(f"wrote {len(payload)} bytes to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    eng = _engine(args)
    uvicorn.run(create_app(eng), host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_eval(args) -> int:
    eng = _engine(args)
    gallery_map = None
    if args.gallery_map:
        with open(args.gallery_map) as f:
            gallery_map = {k: int(v) for k, v in json.load(f).items()}
    report, _ = eng.eval_run(
        args.queries,
        ks=tuple(args.k),
        teacher_queries_path=args.teacher,
        teacher_gallery_path=args.gallery_teacher,
        gallery_map=gallery_map,
    )
    print(report)
    return 0


def cmd_compress(args) -> int:
    model = load_model(WeightArchive.load(args.weights))
    for path in args.images:
        image = load_image(path)
        res = encode_image(image, model.codec, model.gaussian, model.prior, model.model_id)
        out = Path(args.out) / (Path(path).stem + ".licb") if args.out else Path(
            path
        ).with_suffix(".licb")
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "wb") as f:
            f.write(res.bitstream.to_bytes())
        _print_json(
            {
                "file": str(path),
                "out": str(out),
                "bpp": res.bpp,
                "psnr": "inf" if math.isinf(res.psnr) else res.psnr,
            }
        )
    return 0


def cmd_decompress(args) -> int:
    model = load_model(WeightArchive.load(args.weights))
    with open(args.bitstream, "rb") as f:
        data = f.read()
    if args.header_only:
        _print_json(inspect_header(data))
        return 0
    image = decode_image(data, model.codec, model.gaussian, model.prior, model.model_id)
    with open(args.out, "wb") as f:
        f.write(encode_png(image))
    print(f"wrote {args.out}")
    return 0


def cmd_codec_bench(args) -> int:
    if args.db:
        from .store import UnifiedDb

        db = UnifiedDb(ServiceConfig.resolve_db(args.db))
        ids = db.ids()[: args.count]
        if not ids:
            print("database is empty", file=sys.stderr)
            return 1
        embs = np.stack([db.get(i).embedding for i in ids])
    else:
        rng = np.random.default_rng(args.seed)
        embs = rng.normal(size=(args.count, args.dim)).astype(np.float32)
        embs /= np.linalg.norm(embs, axis=1, keepdims=True)
    rows = bench_strategies(embs)
    print(f"embeddings: {embs.shape[0]} x dim {embs.shape[1]}")
    print(format_bench(rows))
    return 0


def cmd_init_weights(args) -> int:
    archive = init_random_archive(
        seed=args.seed, n_ch=args.n_ch, m_ch=args.m_ch, hz_ch=args.hz_ch,
        embed_dim=args.dim,
    )
    archive.save(args.out)
    print(f"wrote {args.out} ({len(archive.names)} tensors, model id {archive.model_id()})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latentsearch")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="compress + embed + store images")
    _add_common(sp)
    sp.add_argument("--embed-codec", choices=STRATEGIES, default=None)
    sp.add_argument("images", nargs="+")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("query", help="search by image through the compress path")
    _add_common(sp)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--thr", type=float, default=None)
    sp.add_argument("--save-bitstream", default=None, help="persist the query's own bitstream")
    sp.add_argument("image")
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("fetch", help="retrieve a stored image (decoded or raw)")
    _add_common(sp)
    sp.add_argument("--raw", action="store_true", help="emit the LICB container instead of PNG")
    sp.add_argument("id", type=int)
    sp.add_argument("out")
    sp.set_defaults(func=cmd_fetch)

    sp = sub.add_parser("serve", help="run the HTTP API")
    _add_common(sp)
    sp.add_argument("--embed-codec", choices=STRATEGIES, default=None)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8321)
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("eval", help="run the retrieval evaluation report")
    _add_common(sp)
    sp.add_argument("--queries", required=True, help="directory of query images")
    sp.add_argument("--teacher", default=None, help="LICE file keyed by query filename")
    sp.add_argument("--gallery-teacher", default=None, help="LICE file for gallery records")
    sp.add_argument("--gallery-map", default=None, help="JSON {entry name: record id}")
    sp.add_argument("--k", type=int, action="append", default=None)
    sp.set_defaults(func=cmd_eval, k_default=[1, 5])

    sp = sub.add_parser("compress", help="encode images to .licb bitstreams")
    _add_common(sp, db=False)
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("images", nargs="+")
    sp.set_defaults(func=cmd_compress)

    sp = sub.add_parser("decompress", help="decode a .licb bitstream to PNG")
    _add_common(sp, db=False)
    sp.add_argument("--header-only", action="store_true")
    sp.add_argument("bitstream")
    sp.add_argument("--out", default="out.png")
    sp.set_defaults(func=cmd_decompress)

    sp = sub.add_parser("codec-bench", help="compare embedding compression strategies")
    sp.add_argument("--db", default=None, help="benchmark stored embeddings instead")
    sp.add_argument("--count", type=int, default=500)
    sp.add_argument("--dim", type=int, default=512)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_codec_bench)

    sp = sub.add_parser("init-weights", help="write a seeded random weight archive")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-ch", type=int, default=64)
    sp.add_argument("--m-ch", type=int, default=96)
    sp.add_argument("--hz-ch", type=int, default=64)
    sp.add_argument("--dim", type=int, default=512)
    sp.add_argument("out")
    sp.set_defaults(func=cmd_init_weights)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "k", None) is None and hasattr(args, "k_default"):
        args.k = args.k_default
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RecordNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (LatentSearchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
