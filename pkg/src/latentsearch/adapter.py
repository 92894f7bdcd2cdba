"""Latent-to-embedding adapter: maps the quantized latent directly to a
search embedding without decoding the image.

Three resolution branches bring the latent to a common 4x-reduced extent:

    A: avg_pool2(avg_pool2(y))
    B: relu(conv3x3_s2(avg_pool2(y)))
    C: relu(conv3x3_s2(relu(conv3x3_s2(y))))

The branches are channel-concatenated and fused by a per-position MLP
(three 1x1 convolutions with relu between, none after the last), then
globally pooled and L2-normalized into the fixed-length embedding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    ConvParams,
    LinearParams,
    as_tensor,
    avg_pool2,
    conv2d,
    cosine_distance,
    global_avg_pool,
    l2_normalize,
    relu,
)

MIN_LATENT_EXTENT = 4


def _check_branch(name: str, p: ConvParams):
    if p.kernel != (3, 3) or p.stride != 2 or p.padding != 1:
        raise ValueError(f"{name} must be a 3x3 stride-2 pad-1 convolution")


@dataclass(frozen=True)
class AdapterWeights:
    branch_b: ConvParams
    branch_c1: ConvParams
    branch_c2: ConvParams
    fusion: tuple[LinearParams, ...]

    def __post_init__(self):
        _check_branch("branch_b", self.branch_b)
        _check_branch("branch_c1", self.branch_c1)
        _check_branch("branch_c2", self.branch_c2)
        if len(self.fusion) != 3:
            raise ValueError(f"fusion needs 3 layers, got {len(self.fusion)}")
        if self.branch_c1.out_ch != self.branch_c2.in_ch:
            raise ValueError("branch_c1 out_ch must feed branch_c2")
        m = self.branch_b.in_ch
        if self.branch_c1.in_ch != m:
            raise ValueError("both conv branches must consume the latent channel count")
        concat = m + self.branch_b.out_ch + self.branch_c2.out_ch
        if self.fusion[0].in_dim != concat:
            raise ValueError(
                f"fusion input dim {self.fusion[0].in_dim} != concatenated branches {concat}"
            )
        for i in range(2):
            if self.fusion[i].out_dim != self.fusion[i + 1].in_dim:
                raise ValueError(f"fusion[{i}] out_dim does not feed fusion[{i+1}]")

    @property
    def m_ch(self) -> int:
        return self.branch_b.in_ch

    @property
    def embed_dim(self) -> int:
        return self.fusion[2].out_dim


def embed_latent(y_hat: np.ndarray, w: AdapterWeights) -> np.ndarray:
    """Quantized latent -> unit-norm embedding of length ``w.embed_dim``.

    Rejects latents with spatial extent < 4 (images smaller than 64x64)
    and degenerate all-zero activations (which have no direction).
    """
    y_hat = as_tensor(y_hat)
    _, c, h, wd = y_hat.shape
    if c != w.m_ch:
        raise ValueError(f"latent has {c} channels, adapter expects {w.m_ch}")
    if h < MIN_LATENT_EXTENT or wd < MIN_LATENT_EXTENT:
        raise ValueError(
            f"latent extent {h}x{wd} below minimum {MIN_LATENT_EXTENT} "
            "(image too small: < 64x64 original)"
        )
    half = avg_pool2(y_hat)
    a = avg_pool2(half)
    b = relu(conv2d(half, w.branch_b))
    cbr = relu(conv2d(relu(conv2d(y_hat, w.branch_c1)), w.branch_c2))
    fused = np.concatenate([a, b, cbr], axis=1)
    for i, layer in enumerate(w.fusion):
        fused = conv2d(fused, layer.as_conv())
        if i < 2:
            fused = relu(fused)
    return l2_normalize(global_avg_pool(fused))


def distill_distance(e_teacher: np.ndarray, e_adapter: np.ndarray) -> float:
    """Cosine distance between a teacher embedding and an adapter embedding."""
    return cosine_distance(e_teacher, e_adapter)
