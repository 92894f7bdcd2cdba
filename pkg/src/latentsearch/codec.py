"""Inference path of the learned codec: analysis/synthesis transforms, the
hyperprior, and image encode/decode built on the range coder.

Transforms are fixed chains of 3x3 convolutions. Downsampling stages use
stride 2; upsampling stages use nearest-neighbour 2x followed by a stride-1
convolution, so composing analysis and synthesis on a 64-multiple image
reproduces the input extents exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import Bitstream, parse_bitstream
from .entropy import FactorizedPrior, GaussianConditional
from .errors import ModelMismatch
from .numerics import (
    ConvParams,
    as_tensor,
    conv2d,
    psnr,
    relu,
    round_quantize,
    upsample_nearest2,
)

SIGMA_FLOOR = 1e-6


def _check_chain(name: str, stages: tuple[ConvParams, ...], count: int, stride: int):
    if len(stages) != count:
        raise ValueError(f"{name} needs {count} stages, got {len(stages)}")
    for i, s in enumerate(stages):
        if s.kernel != (3, 3) or s.stride != stride or s.padding != 1:
            raise ValueError(
                f"{name}[{i}] must be 3x3 stride {stride} pad 1, got kernel {s.kernel} "
                f"stride {s.stride} pad {s.padding}"
            )
    for i in range(count - 1):
        if stages[i].out_ch != stages[i + 1].in_ch:
            raise ValueError(
                f"{name}[{i}] out_ch {stages[i].out_ch} != {name}[{i+1}] in_ch "
                f"{stages[i + 1].in_ch}"
            )


@dataclass(frozen=True)
class CodecWeights:
    """All learned parameters of the codec transforms.

    ga: 4 stride-2 stages, image -> latent (spatial /16).
    gs: 4 upsampling stages mirroring ga (latent -> image).
    ha: 2 stride-2 stages, latent -> hyper-latent (further /4).
    hs: 2 upsampling stages emitting mean and scale, 2 channels per latent channel.
    """

    ga: tuple[ConvParams, ...]
    gs: tuple[ConvParams, ...]
    ha: tuple[ConvParams, ...]
    hs: tuple[ConvParams, ...]

    def __post_init__(self):
        _check_chain("ga", self.ga, 4, 2)
        _check_chain("gs", self.gs, 4, 1)
        _check_chain("ha", self.ha, 2, 2)
        _check_chain("hs", self.hs, 2, 1)
        if self.ga[0].in_ch != 3 or self.gs[3].out_ch != 3:
            raise ValueError("ga must consume and gs must produce 3 channels")
        m = self.m_ch
        if self.gs[0].in_ch != m or self.ha[0].in_ch != m:
            raise ValueError("gs and ha must consume the latent channel count")
        if self.hs[1].out_ch != 2 * m:
            raise ValueError(
                f"hs must emit 2 channels per latent channel: {self.hs[1].out_ch} != {2 * m}"
            )

    @property
    def m_ch(self) -> int:
        return self.ga[3].out_ch

    @property
    def hz_ch(self) -> int:
        return self.ha[1].out_ch


def pad_to_multiple(image: np.ndarray, multiple: int = 64) -> np.ndarray:
    """Edge-replicate on the right/bottom so both spatial extents divide ``multiple``."""
    _, _, h, w = image.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        image = np.pad(image, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
    return image


def analyze(image: np.ndarray, w: CodecWeights) -> np.ndarray:
    """g_a: padded [0,1] image -> pre-quantization latent y, spatial /16."""
    image = as_tensor(image)
    _, c, h, wd = image.shape
    if c != 3:
        raise ValueError(f"analyze expects 3 channels, got {c}")
    if h % 64 or wd % 64:
        raise ValueError(f"analyze expects 64-multiple extents, got {h}x{wd}")
    lo, hi = float(image.min()), float(image.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"analyze expects values in [0, 1], got [{lo:.4g}, {hi:.4g}]")
    x = image
    for i, stage in enumerate(w.ga):
        x = conv2d(x, stage)
        if i < 3:
            x = relu(x)
    return x


def synthesize(y_hat: np.ndarray, w: CodecWeights) -> np.ndarray:
    """g_s: integer-valued latent -> reconstruction, clamped to [0, 1]."""
    y_hat = as_tensor(y_hat)
    if y_hat.shape[1] != w.m_ch:
        raise ValueError(f"latent has {y_hat.shape[1]} channels, weights expect {w.m_ch}")
    x = y_hat
    for i, stage in enumerate(w.gs):
        x = conv2d(upsample_nearest2(x), stage)
        if i < 3:
            x = relu(x)
    return np.clip(x, 0.0, 1.0)


def _hyper_synthesis(z_hat: np.ndarray, w: CodecWeights) -> tuple[np.ndarray, np.ndarray]:
    """h_s on the quantized hyper-latent: (mu, sigma) at the latent resolution."""
    x = relu(conv2d(upsample_nearest2(z_hat), w.hs[0]))
    params = conv2d(upsample_nearest2(x), w.hs[1])
    m = w.m_ch
    mu = params[:, :m]
    sigma = np.maximum(np.abs(params[:, m:]), np.float32(SIGMA_FLOOR))
    return mu, sigma


def hyper_path(y: np.ndarray, w: CodecWeights) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """h_a then h_s: latent -> (quantized hyper-latent, mu, sigma).

    h_s runs on the *quantized* hyper-latent so the decode side reproduces
    mu and sigma bit-for-bit. sigma is |raw| lower-clamped at SIGMA_FLOOR.
    """
    y = as_tensor(y)
    z = conv2d(relu(conv2d(y, w.ha[0])), w.ha[1])
    z_hat = round_quantize(z)
    mu, sigma = _hyper_synthesis(z_hat, w)
    if mu.shape != y.shape:
        raise ValueError(f"hyperprior produced mu of shape {mu.shape} for latent {y.shape}")
    return z_hat, mu, sigma


@dataclass(frozen=True)
class EncodeResult:
    bitstream: Bitstream
    bpp: float
    psnr: float
    y_hat: np.ndarray

    @property
    def stats(self) -> dict:
        return {"bpp": self.bpp, "psnr": self.psnr}


def encode_image(
    image: np.ndarray,
    w: CodecWeights,
    gaussian: GaussianConditional,
    prior: FactorizedPrior,
    model_id: int = 0,
) -> EncodeResult:
    """Full encode: pad, transform, quantize, entropy-code, wrap in a container.

    bpp counts payload bits over *original* pixels; psnr is measured against
    the internal reconstruction, so decode of the returned stream is
    bit-identical to what psnr saw.
    """
    image = as_tensor(image)
    _, _, h, wd = image.shape
    if h >= 1 << 16 or wd >= 1 << 16:
        raise ValueError(f"image {wd}x{h} exceeds the 2^16-1 per-side limit")
    padded = pad_to_multiple(image)
    y = analyze(padded, w)
    y_hat = round_quantize(y)
    z_hat, mu, sigma = hyper_path(y, w)

    z_payload = prior.encode(z_hat)
    y_payload = gaussian.encode(y_hat, mu, sigma)
    bs = Bitstream(
        model_id=model_id,
        orig_w=wd, orig_h=h,
        pad_w=padded.shape[3], pad_h=padded.shape[2],
        z_bytes=z_payload, y_bytes=y_payload,
    )
    recon = synthesize(y_hat, w)[:, :, :h, :wd]
    return EncodeResult(
        bitstream=bs,
        bpp=8.0 * bs.payload_bytes / (wd * h),
        psnr=psnr(image, recon, peak=1.0),
        y_hat=y_hat,
    )


def decode_latents(
    data: bytes,
    w: CodecWeights,
    gaussian: GaussianConditional,
    prior: FactorizedPrior,
    expected_model_id: int | None = None,
) -> tuple[Bitstream, np.ndarray, np.ndarray]:
    """Validate a container and entropy-decode it back to (header, y_hat, z_hat)."""
    bs = parse_bitstream(data)
    if expected_model_id is not None and bs.model_id != expected_model_id:
        raise ModelMismatch(
            f"stream written with model id {bs.model_id}, engine loaded {expected_model_id}"
        )
    zh, zw = bs.pad_h // 64, bs.pad_w // 64
    z_hat = prior.decode(bs.z_bytes, (1, w.hz_ch, zh, zw))
    mu, sigma = _hyper_synthesis(z_hat, w)
    y_hat = gaussian.decode(bs.y_bytes, mu, sigma)
    return bs, y_hat, z_hat


def decode_image(
    data: bytes,
    w: CodecWeights,
    gaussian: GaussianConditional,
    prior: FactorizedPrior,
    expected_model_id: int | None = None,
) -> np.ndarray:
    """Decode a container to the reconstruction, cropped to the original dims."""
    bs, y_hat, _ = decode_latents(data, w, gaussian, prior, expected_model_id)
    recon = synthesize(y_hat, w)
    return recon[:, :, : bs.orig_h, : bs.orig_w]
