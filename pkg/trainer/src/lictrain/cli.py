"""Trainer CLI: stage1, stage2, ablate, teacher-embed, export-random."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import torch

from .config import TrainConfig, parse_config_file
from .data import SyntheticTextures, synthetic_image
from .export import export_weights
from .teacher import RandomProjectionTeacher, teacher_embed_batch
from .train import (
    format_ablation,
    run_ablation,
    stage1_train,
    stage2_train,
)


def _load_config(args) -> TrainConfig:
    return parse_config_file(args.config) if args.config else TrainConfig()


def cmd_stage1(args) -> int:
    cfg = _load_config(args)
    data = SyntheticTextures(args.train_images, seed=cfg.seed, size=cfg.crop_size)
    result = stage1_train(cfg, data)
    export_weights(result.model, args.out)
    torch.save(result.model.state_dict(), args.out + ".pt")
    print(json.dumps({"final": result.history[-1], "archive": args.out}))
    return 0


def cmd_stage2(args) -> int:
    cfg = _load_config(args)
    data = SyntheticTextures(args.train_images, seed=cfg.seed, size=cfg.crop_size)
    teacher = RandomProjectionTeacher(dim=cfg.embed_dim, seed=cfg.seed)
    from .train import build_model

    stage1_model = build_model(cfg)
    stage1_model.load_state_dict(torch.load(args.stage1 + ".pt", weights_only=True))
    result = stage2_train(cfg, data, teacher, stage1_model)
    export_weights(result.model, args.out)
    torch.save(result.model.state_dict(), args.out + ".pt")
    print(json.dumps({"final": result.history[-1], "archive": args.out}))
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    data = SyntheticTextures(args.train_images, seed=cfg.seed, size=cfg.crop_size)
    teacher = RandomProjectionTeacher(dim=cfg.embed_dim, seed=cfg.seed)
    stage1 = stage1_train(cfg, data)
    rows = run_ablation(cfg, data, teacher, stage1)
    print(format_ablation(rows))
    return 0


def cmd_teacher_embed(args) -> int:
    teacher = RandomProjectionTeacher(dim=args.dim, seed=args.seed)
    if args.synthetic:
        images = {
            f"img{i:05d}.ppm": synthetic_image(args.seed, i, args.size)
            for i in range(args.synthetic)
        }
    else:
        from pathlib import Path

        images = {}
        for p in sorted(Path(args.images).iterdir()):
            if p.suffix.lower() != ".ppm":
                continue
            with open(p, "rb") as f:
                images[p.name] = _read_ppm(f.read())
    names = teacher_embed_batch(teacher, images, args.out)
    print(f"wrote {len(names)} embeddings to {args.out} (teacher {teacher.tag})")
    return 0


def _read_ppm(data: bytes) -> np.ndarray:
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("only binary PPM (P6) is supported")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    pixels = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8)
    return (pixels.reshape(h, w, 3).transpose(2, 0, 1) / 255.0).astype(np.float32)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lictrain")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("stage1", help="train the codec on R + lambda*D")
    sp.add_argument("--config", default=None, help="key=value config file")
    sp.add_argument("--train-images", type=int, default=400)
    sp.add_argument("out", help="output .licw archive path")
    sp.set_defaults(func=cmd_stage1)

    sp = sub.add_parser("stage2", help="distill the teacher into the adapter")
    sp.add_argument("--config", default=None)
    sp.add_argument("--train-images", type=int, default=400)
    sp.add_argument("--stage1", required=True, help="stage-1 archive path (expects .pt beside)")
    sp.add_argument("out")
    sp.set_defaults(func=cmd_stage2)

    sp = sub.add_parser("ablate", help="run the freeze-ablation grid")
    sp.add_argument("--config", default=None)
    sp.add_argument("--train-images", type=int, default=400)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("teacher-embed", help="write a LICE teacher-embedding file")
    sp.add_argument("--images", default=None, help="directory of .ppm images")
    sp.add_argument("--synthetic", type=int, default=0, help="embed N synthetic images instead")
    sp.add_argument("--dim", type=int, default=64)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("out")
    sp.set_defaults(func=cmd_teacher_embed)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
