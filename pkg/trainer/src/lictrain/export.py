"""Export trained weights to the "LICW" archive the engine consumes.

Layout (little-endian): magic "LICW" | version u8 | meta_len u32 | meta
JSON | float32 blob in sorted-name order. The factorized prior is exported
as quantized 16-bit CDF tables built from the learned per-channel density,
using the same discretize-and-quantize construction the engine applies to
its Gaussian conditional, so trainer-side and engine-side rate estimates
agree up to coder overhead.
"""
from __future__ import annotations

import json
import struct

import numpy as np
from scipy.special import ndtr

from .models import LICModel

MAGIC = b"LICW"
VERSION = 1
_HEAD = struct.Struct("<4sBI")

CDF_TOTAL = 1 << 16
Z_MIN, Z_MAX = -127, 128
SCALE_MIN, SCALE_MAX, SCALE_LEVELS = 0.11, 256.0, 64

CONV_GROUPS = {"ga": 4, "gs": 4, "ha": 2, "hs": 2}
ADAPTER_PARTS = ("branch_b", "branch_c1", "branch_c2")


def quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Frequencies summing to 2^16 with a floor of 1; same construction as the engine."""
    p = np.clip(np.asarray(pmf, dtype=np.float64), 0.0, None)
    n = p.shape[0]
    s = p.sum()
    if not np.isfinite(s) or s <= 0.0:
        p = np.ones(n)
        s = float(n)
    freq = np.floor(p / s * (CDF_TOTAL - n)).astype(np.int64) + 1
    freq[np.argmax(p)] += CDF_TOTAL - int(freq.sum())
    return freq


def discretized_gaussian_pmf(mean: float, sigma: float, lo: int, hi: int) -> np.ndarray:
    k = np.arange(lo, hi + 1, dtype=np.float64)
    sigma = max(float(sigma), 1e-9)
    return ndtr((k - mean + 0.5) / sigma) - ndtr((k - mean - 0.5) / sigma)


def collect_tensors(model: LICModel) -> dict[str, np.ndarray]:
    """Model parameters plus derived prior tables, under canonical names."""
    t: dict[str, np.ndarray] = {}

    def grab(name, param):
        t[name] = param.detach().cpu().numpy().astype(np.float32)

    for group, count in CONV_GROUPS.items():
        stages = getattr(model, group)
        for i in range(count):
            grab(f"{group}.{i}.w", stages[i].weight)
            grab(f"{group}.{i}.b", stages[i].bias)
    for part in ADAPTER_PARTS:
        conv = getattr(model, part)
        grab(f"adapter.{part}.w", conv.weight)
        grab(f"adapter.{part}.b", conv.bias)
    for i in range(3):
        w = model.fusion[i].weight.detach().cpu().numpy().astype(np.float32)
        t[f"adapter.fusion.{i}.w"] = w.reshape(w.shape[0], w.shape[1])
        grab(f"adapter.fusion.{i}.b", model.fusion[i].bias)

    means = model.z_density.mean.detach().cpu().numpy()
    sigmas = model.z_density.sigma().detach().cpu().numpy()
    n_sym = Z_MAX - Z_MIN + 1
    cdf = np.zeros((model.hz_ch, n_sym + 1), dtype=np.float32)
    for c in range(model.hz_ch):
        freq = quantize_pmf(discretized_gaussian_pmf(means[c], sigmas[c], Z_MIN, Z_MAX))
        cdf[c, 1:] = np.cumsum(freq.astype(np.float64)).astype(np.float32)
    t["prior.factorized.cdf"] = cdf
    t["prior.factorized.offset"] = np.full(model.hz_ch, float(Z_MIN), dtype=np.float32)
    t["prior.gaussian.scales"] = np.geomspace(SCALE_MIN, SCALE_MAX, SCALE_LEVELS).astype(
        np.float32
    )
    return t


def required_names(model: LICModel) -> list[str]:
    names = [
        f"{g}.{i}.{k}" for g, n in CONV_GROUPS.items() for i in range(n) for k in ("w", "b")
    ]
    names += [f"adapter.{p}.{k}" for p in ADAPTER_PARTS for k in ("w", "b")]
    names += [f"adapter.fusion.{i}.{k}" for i in range(3) for k in ("w", "b")]
    names += ["prior.factorized.cdf", "prior.factorized.offset", "prior.gaussian.scales"]
    return names


def archive_bytes(tensors: dict[str, np.ndarray]) -> bytes:
    meta: dict[str, dict] = {}
    blob = bytearray()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float32)
        meta[name] = {"dtype": "f32", "shape": list(arr.shape), "offset": len(blob)}
        blob += arr.tobytes()
    meta_json = json.dumps(meta, sort_keys=True).encode("utf-8")
    return _HEAD.pack(MAGIC, VERSION, len(meta_json)) + meta_json + bytes(blob)


def export_weights(model: LICModel, path, tensors: dict[str, np.ndarray] | None = None) -> None:
    """Write the archive, refusing to emit an incomplete tensor set."""
    tensors = collect_tensors(model) if tensors is None else tensors
    missing = [n for n in required_names(model) if n not in tensors]
    if missing:
        raise ValueError(f"refusing to export, missing tensors: {', '.join(missing)}")
    with open(path, "wb") as f:
        f.write(archive_bytes(tensors))
