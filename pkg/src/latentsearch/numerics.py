"""Deterministic forward-pass tensor kernels shared by the codec and the adapter.

Tensors are plain numpy arrays: rank 4, float32, row-major, layout
``(batch, channels, height, width)``. All operations here are pure
functions of their inputs and never mutate their arguments, so they are
safe to call from any number of threads.

Rounding is half-away-from-zero everywhere (symmetric around 0, which is
where the latents live); convolution accumulates in float64 and casts the
result back to float32 so results are reproducible run to run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Quantizer symbol magnitude limit; values beyond this cannot be
# entropy-coded and are rejected instead of silently clipped.
QUANT_LIMIT = float(2**20)


def as_tensor(data, shape=None) -> np.ndarray:
    """Coerce ``data`` to a rank-4 float32 tensor, validating the invariants."""
    t = np.asarray(data, dtype=np.float32)
    if shape is not None:
        t = t.reshape(shape)
    if t.ndim != 4:
        raise ValueError(f"tensor must be rank 4, got rank {t.ndim} with shape {t.shape}")
    if any(e < 1 for e in t.shape):
        raise ValueError(f"tensor extents must be >= 1, got {t.shape}")
    if not np.isfinite(t).all():
        raise ValueError("tensor contains NaN or Inf")
    return t


def _check_finite(t: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(t).all():
        raise FloatingPointError(f"{op} produced non-finite values")
    return t


@dataclass(frozen=True)
class ConvParams:
    """Weights of one convolution: ``weights[out_ch, in_ch, kh, kw]`` + bias."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        b = np.asarray(self.bias, dtype=np.float32)
        if w.ndim != 4:
            raise ValueError(f"conv weights must be rank 4, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match out_ch {w.shape[0]}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_ch(self) -> int:
        return self.weights.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


@dataclass(frozen=True)
class LinearParams:
    """Dense layer ``weights[out_dim, in_dim]`` + bias, applied as a 1x1 conv."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        b = np.asarray(self.bias, dtype=np.float32)
        if w.ndim != 2:
            raise ValueError(f"linear weights must be rank 2, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match out_dim {w.shape[0]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def as_conv(self) -> ConvParams:
        w = self.weights.reshape(self.out_dim, self.in_dim, 1, 1)
        return ConvParams(weights=w, bias=self.bias, stride=1, padding=0)


def conv2d(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Strided 2-D cross-correlation with zero padding.

    Output spatial extents are ``floor((in + 2*pad - k) / stride) + 1``.
    Accumulation happens in float64 (im2col + matmul) so every output value
    is the exact dot product plus bias up to one final float32 rounding.
    """
    b, c, h, w = x.shape
    if c != params.in_ch:
        raise ValueError(
            f"conv2d channel mismatch: input {x.shape} vs weights {params.weights.shape}"
        )
    kh, kw = params.kernel
    s, p = params.stride, params.padding
    if h + 2 * p < kh or w + 2 * p < kw:
        raise ValueError(
            f"conv2d spatial extents {h}x{w} too small for kernel {kh}x{kw} with pad {p}"
        )
    if p > 0:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    oh = (h + 2 * p - kh) // s + 1
    ow = (w + 2 * p - kw) // s + 1

    # im2col: gather all receptive fields, then a single matmul per batch.
    cols = np.empty((b, c * kh * kw, oh * ow), dtype=np.float64)
    idx = 0
    for ci in range(c):
        for ki in range(kh):
            for kj in range(kw):
                patch = x[:, ci, ki : ki + oh * s : s, kj : kj + ow * s : s]
                cols[:, idx, :] = patch.reshape(b, -1)
                idx += 1
    wmat = params.weights.reshape(params.out_ch, -1).astype(np.float64)
    out = wmat @ cols  # (b, out_ch, oh*ow) via broadcasting
    out += params.bias.astype(np.float64)[:, None]
    out = out.reshape(b, params.out_ch, oh, ow).astype(np.float32)
    return _check_finite(out, "conv2d")


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, v); shape preserved."""
    return np.maximum(x, np.float32(0.0))


def _pad_to_even(x: np.ndarray) -> np.ndarray:
    _, _, h, w = x.shape
    ph, pw = h % 2, w % 2
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
    return x


def avg_pool2(x: np.ndarray) -> np.ndarray:
    """2x2 stride-2 average pooling; odd extents are edge-replicated first."""
    x = _pad_to_even(x)
    b, c, h, w = x.shape
    v = x.reshape(b, c, h // 2, 2, w // 2, 2).astype(np.float64)
    out = v.mean(axis=(3, 5)).astype(np.float32)
    return _check_finite(out, "avg_pool2")


def upsample_nearest2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling; paired with a conv in the synthesis path."""
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Collapse spatial extent: element c is the mean over all positions of channel c.

    Requires batch 1; returns a 1-D float32 vector of length ``channels``.
    """
    if x.shape[0] != 1:
        raise ValueError(f"global_avg_pool expects batch 1, got batch {x.shape[0]}")
    out = x.astype(np.float64).mean(axis=(0, 2, 3)).astype(np.float32)
    return _check_finite(out, "global_avg_pool")


def round_quantize(x: np.ndarray) -> np.ndarray:
    """Elementwise round half away from zero; output values are exact integers.

    Rejects magnitudes above 2**20, which is outside the entropy-model
    symbol range and would not survive the float32 round trip anyway.
    """
    if not np.isfinite(x).all():
        raise ValueError("round_quantize requires finite values")
    amax = float(np.abs(x).max()) if x.size else 0.0
    if amax > QUANT_LIMIT:
        raise ValueError(f"round_quantize value magnitude {amax:.4g} exceeds 2^20")
    return np.copysign(np.floor(np.abs(x) + np.float32(0.5)), x).astype(np.float32)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - (a.b)/(|a||b|), in [0, 2]. Rejects zero-norm inputs."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"cosine_distance length mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine_distance is undefined for zero-norm vectors")
    sim = float(np.dot(a, b)) / (na * nb)
    return 1.0 - max(-1.0, min(1.0, sim))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB. Returns +inf when the tensors are identical."""
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("psnr peak must be > 0")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm (direction preserved). Rejects the zero vector."""
    v = np.asarray(v, dtype=np.float32)
    n = float(np.linalg.norm(v.astype(np.float64)))
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    out = (v.astype(np.float64) / n).astype(np.float32)
    return _check_finite(out, "l2_normalize")
