"""Loss components: differentiable rate, distortion, distillation distance.

Training uses additive uniform noise in [-0.5, 0.5] as the quantizer
relaxation for the rate term and straight-through rounding for the
distortion/distillation path, the standard mean-scale hyperprior recipe.
The gradient check runs on the fully-relaxed form (fixed noise everywhere)
because the straight-through estimator is a surrogate and deliberately
disagrees with the true derivative of rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .models import LICModel, TRAIN_SIGMA_MIN, quantize_ste

LOG2 = 0.6931471805599453


def gaussian_likelihood(y: torch.Tensor, mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    sigma = sigma.clamp(min=TRAIN_SIGMA_MIN)
    upper = torch.special.ndtr((y - mu + 0.5) / sigma)
    lower = torch.special.ndtr((y - mu - 0.5) / sigma)
    return (upper - lower).clamp(min=1e-10)


def bits_from_likelihood(p: torch.Tensor) -> torch.Tensor:
    return -torch.log(p).sum() / LOG2


def cosine_distill(e_teacher: torch.Tensor, e_adapter: torch.Tensor) -> torch.Tensor:
    """Mean (1 - cosine) over the batch; inputs need not be pre-normalized."""
    sim = torch.nn.functional.cosine_similarity(e_teacher, e_adapter, dim=1, eps=1e-12)
    return (1.0 - sim).mean()


@dataclass
class LossParts:
    total: torch.Tensor
    rate_bpp: torch.Tensor
    distortion: torch.Tensor
    distill: torch.Tensor


def training_loss(
    model: LICModel,
    x: torch.Tensor,
    lambda_rd: float,
    lambda_s: float = 0.0,
    teacher_emb: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> LossParts:
    """R + lambda*D (+ lambda_s*D_s): noise relaxation for R, STE for D and D_s."""
    y = model.analyze(x)
    z = model.hyper_analyze(y)

    noise_y = torch.rand(y.shape, generator=generator, dtype=y.dtype) - 0.5
    noise_z = torch.rand(z.shape, generator=generator, dtype=z.dtype) - 0.5
    y_noisy = y + noise_y
    z_noisy = z + noise_z

    z_ste = quantize_ste(z)
    mu, sigma = model.hyper_synthesize(z_ste)

    n_pixels = x.shape[0] * x.shape[2] * x.shape[3]
    bits = bits_from_likelihood(gaussian_likelihood(y_noisy, mu, sigma))
    bits = bits + bits_from_likelihood(model.z_density.likelihood(z_noisy))
    rate_bpp = bits / n_pixels

    y_ste = quantize_ste(y)
    recon = model.synthesize(y_ste)
    distortion = torch.mean((x - recon) ** 2)

    total = rate_bpp + lambda_rd * distortion
    if lambda_s > 0.0:
        if teacher_emb is None:
            raise ValueError("lambda_s > 0 requires teacher embeddings")
        distill = cosine_distill(teacher_emb, model.embed(y_ste))
        total = total + lambda_s * distill
    else:
        distill = torch.zeros((), dtype=x.dtype)
    return LossParts(total=total, rate_bpp=rate_bpp, distortion=distortion, distill=distill)


def relaxed_loss(
    model: LICModel,
    x: torch.Tensor,
    noise_y: torch.Tensor,
    noise_z: torch.Tensor,
    lambda_rd: float,
    lambda_s: float,
    teacher_emb: torch.Tensor,
) -> torch.Tensor:
    """Fully differentiable form of the stage-2 objective with frozen noise.

    Quantization is the additive-noise relaxation in every term, so central
    finite differences of this function match autograd exactly (up to
    higher-order terms); used by the gradient sanity check.
    """
    y = model.analyze(x)
    z = model.hyper_analyze(y)
    y_noisy = y + noise_y
    z_noisy = z + noise_z
    mu, sigma = model.hyper_synthesize(z_noisy)

    n_pixels = x.shape[0] * x.shape[2] * x.shape[3]
    bits = bits_from_likelihood(gaussian_likelihood(y_noisy, mu, sigma))
    bits = bits + bits_from_likelihood(model.z_density.likelihood(z_noisy))
    rate_bpp = bits / n_pixels

    recon = model.synthesize(y_noisy)
    distortion = torch.mean((x - recon) ** 2)
    distill = cosine_distill(teacher_emb, model.embed(y_noisy))
    return rate_bpp + lambda_rd * distortion + lambda_s * distill
