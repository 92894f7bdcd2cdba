"""Teacher embedders and the "LICE" embedding-file writer.

The desk-scale stand-in is a frozen random projection of coarse color
structure: deterministic given (tag, seed), cheap, and smooth enough for
the adapter to distill. A real pretrained vision-language image encoder
can be plugged in through the same protocol.
"""
from __future__ import annotations

import struct
from typing import Protocol

import numpy as np
import torch


class Teacher(Protocol):
    tag: str
    dim: int

    def embed(self, images: np.ndarray) -> np.ndarray:
        """[B, 3, H, W] floats in [0,1] -> [B, dim] unit rows."""
        ...


class RandomProjectionTeacher:
    """Frozen seeded projection of 4x4 per-channel block means."""

    GRID = 4

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.tag = f"randproj-d{dim}-s{seed}"
        rng = np.random.default_rng(np.random.SeedSequence([0x7EAC, seed, dim]))
        feat = 3 * self.GRID * self.GRID
        self.projection = rng.normal(0.0, 1.0 / np.sqrt(feat), size=(dim, feat)).astype(
            np.float32
        )

    def _features(self, images: np.ndarray) -> np.ndarray:
        b, c, h, w = images.shape
        g = self.GRID
        hc, wc = (h // g) * g, (w // g) * g
        x = images[:, :, :hc, :wc].reshape(b, c, g, hc // g, g, wc // g)
        return x.mean(axis=(3, 5)).reshape(b, -1).astype(np.float32)

    def embed(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected [B, 3, H, W], got {images.shape}")
        if min(images.shape[2], images.shape[3]) < self.GRID:
            raise ValueError("image smaller than the feature grid")
        feats = self._features(images) - 0.5  # center so constant images keep contrast
        out = feats @ self.projection.T
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return (out / norms).astype(np.float32)

    def embed_torch(self, images: torch.Tensor) -> torch.Tensor:
        return torch.from_numpy(self.embed(images.detach().cpu().numpy()))


# -- LICE files (consumed by the engine's eval harness) -----------------------

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
            f.write(_NLEN.pack(len(raw)))
            f.write(raw)
            f.write(np.asarray(vec, dtype="<f4").ravel().tobytes())


def teacher_embed_batch(teacher: Teacher, images: dict[str, np.ndarray], path) -> list[str]:
    """Embed named images and write one LICE file; unreadable entries skipped.

    `images` maps entry name -> [3, H, W] array. Returns names written.
    """
    import warnings

    entries: dict[str, np.ndarray] = {}
    for name, img in images.items():
        try:
            arr = np.asarray(img, dtype=np.float32)[None]
            entries[name] = teacher.embed(arr)[0]
        except (ValueError, OSError) as exc:
            warnings.warn(f"skipping {name!r}: {exc}")
    if not entries:
        raise ValueError("no embeddable images")
    write_embedding_file(path, entries)
    return list(entries)
