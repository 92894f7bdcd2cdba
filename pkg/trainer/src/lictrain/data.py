"""Seeded synthetic texture dataset, plus an optional local image folder.

Every image is a pure function of (seed, index) via a Philox keyed stream,
so datasets are reproducible across machines and processes.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import torch


def synthetic_image(seed: int, index: int, size: int = 64) -> np.ndarray:
    """One [3, size, size] float32 texture in [0, 1]."""
    rng = np.random.Generator(np.random.Philox(key=[seed, index]))
    h = w = size
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    img = np.zeros((3, h, w))

    ang = rng.uniform(0, 2 * np.pi)
    grad = np.cos(ang) * xx + np.sin(ang) * yy
    base = rng.uniform(0.15, 0.85, size=3)
    slope = rng.uniform(-0.5, 0.5, size=3)
    img += base[:, None, None] + slope[:, None, None] * grad[None]

    for _ in range(int(rng.integers(0, 4))):
        fy, fx = rng.uniform(1, 8, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
        img += wave[None] * rng.uniform(0.02, 0.18, size=(3, 1, 1))

    for _ in range(int(rng.integers(0, 5))):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        r = rng.uniform(0.04, 0.3)
        blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r)))
        img += blob[None] * rng.uniform(-0.6, 0.6, size=(3, 1, 1))

    img += rng.normal(0, rng.uniform(0.0, 0.03), size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


class SyntheticTextures:
    def __init__(self, count: int, seed: int, size: int = 64):
        self.count = count
        self.seed = seed
        self.size = size
        self._cache: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> np.ndarray:
        if not 0 <= index < self.count:
            raise IndexError(index)
        img = self._cache.get(index)
        if img is None:
            img = synthetic_image(self.seed, index, self.size)
            self._cache[index] = img
        return img

    def batch(self, indices) -> torch.Tensor:
        return torch.from_numpy(np.stack([self[i] for i in indices]))


def batches(dataset, batch_size: int, steps: int, rng: np.random.Generator):
    """Yield `steps` shuffled batches; all order randomness from one generator."""
    order = []
    for _ in range(steps):
        while len(order) < batch_size:
            order.extend(rng.permutation(len(dataset)).tolist())
        take, order = order[:batch_size], order[batch_size:]
        yield dataset.batch(take)


def write_ppm(path, image: np.ndarray) -> None:
    """[3, H, W] float [0,1] -> binary PPM (P6); readable by the engine."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    u8 = np.floor(arr * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    h, w = u8.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


def export_dataset_ppm(dataset, directory, indices=None) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i in indices if indices is not None else range(len(dataset)):
        p = str(Path(directory) / f"img{i:05d}.ppm")
        write_ppm(p, dataset[i])
        paths.append(p)
    return paths
