"""Torch modules mirroring the engine's forward pass operation for operation.

The engine runs: 3x3 convolutions (stride 2 down, nearest-2x + stride 1 up),
relu between stages, sigma = clamp(|raw|, 1e-6), and the three-branch
adapter with a 1x1-conv fusion MLP. Anything that diverges here breaks
cross-implementation parity of exported weights, so keep the graphs in
lockstep with the engine when editing.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

SIGMA_FLOOR = 1e-6
TRAIN_SIGMA_MIN = 0.11  # likelihood lower bound; matches the coder's scale grid floor


def conv_down(in_ch: int, out_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1)


def conv_same(in_ch: int, out_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=1, padding=1)


def up2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="nearest")


def round_half_away(x: torch.Tensor) -> torch.Tensor:
    return torch.sign(x) * torch.floor(torch.abs(x) + 0.5)


def quantize_ste(x: torch.Tensor) -> torch.Tensor:
    """Half-away-from-zero rounding with a straight-through gradient."""
    return x + (round_half_away(x) - x).detach()


def avg_pool2(x: torch.Tensor) -> torch.Tensor:
    h, w = x.shape[2], x.shape[3]
    if h % 2 or w % 2:
        x = F.pad(x, (0, w % 2, 0, h % 2), mode="replicate")
    return F.avg_pool2d(x, 2)


class FactorizedDensity(nn.Module):
    """Per-channel discretized Gaussian over the hyper-latent symbols."""

    def __init__(self, channels: int):
        super().__init__()
        self.mean = nn.Parameter(torch.zeros(channels))
        self.log_sigma = nn.Parameter(torch.full((channels,), math.log(2.0)))

    def sigma(self) -> torch.Tensor:
        return torch.exp(self.log_sigma).clamp(min=TRAIN_SIGMA_MIN)

    def likelihood(self, z: torch.Tensor) -> torch.Tensor:
        mean = self.mean.view(1, -1, 1, 1)
        sigma = self.sigma().view(1, -1, 1, 1)
        upper = torch.special.ndtr((z - mean + 0.5) / sigma)
        lower = torch.special.ndtr((z - mean - 0.5) / sigma)
        return (upper - lower).clamp(min=1e-10)


class LICModel(nn.Module):
    """Codec transforms + hyperprior + adapter, aligned with the archive names."""

    def __init__(self, n_ch=24, m_ch=32, hz_ch=12, embed_dim=64, fusion_hidden=96):
        super().__init__()
        self.n_ch, self.m_ch, self.hz_ch = n_ch, m_ch, hz_ch
        self.embed_dim, self.fusion_hidden = embed_dim, fusion_hidden

        self.ga = nn.ModuleList(
            [conv_down(3, n_ch), conv_down(n_ch, n_ch), conv_down(n_ch, n_ch),
             conv_down(n_ch, m_ch)]
        )
        self.gs = nn.ModuleList(
            [conv_same(m_ch, n_ch), conv_same(n_ch, n_ch), conv_same(n_ch, n_ch),
             conv_same(n_ch, 3)]
        )
        self.ha = nn.ModuleList([conv_down(m_ch, n_ch), conv_down(n_ch, hz_ch)])
        self.hs = nn.ModuleList([conv_same(hz_ch, n_ch), conv_same(n_ch, 2 * m_ch)])

        self.branch_b = conv_down(m_ch, m_ch)
        self.branch_c1 = conv_down(m_ch, m_ch)
        self.branch_c2 = conv_down(m_ch, m_ch)
        self.fusion = nn.ModuleList(
            [
                nn.Conv2d(3 * m_ch, fusion_hidden, 1),
                nn.Conv2d(fusion_hidden, fusion_hidden, 1),
                nn.Conv2d(fusion_hidden, embed_dim, 1),
            ]
        )
        self.z_density = FactorizedDensity(hz_ch)

    # -- codec forward pieces (mirror the engine exactly) ---------------------

    def analyze(self, x: torch.Tensor) -> torch.Tensor:
        for i, conv in enumerate(self.ga):
            x = conv(x)
            if i < 3:
                x = F.relu(x)
        return x

    def synthesize(self, y: torch.Tensor) -> torch.Tensor:
        for i, conv in enumerate(self.gs):
            y = conv(up2(y))
            if i < 3:
                y = F.relu(y)
        return y

    def hyper_analyze(self, y: torch.Tensor) -> torch.Tensor:
        return self.ha[1](F.relu(self.ha[0](y)))

    def hyper_synthesize(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = F.relu(self.hs[0](up2(z)))
        params = self.hs[1](up2(h))
        mu = params[:, : self.m_ch]
        sigma = params[:, self.m_ch :].abs().clamp(min=SIGMA_FLOOR)
        return mu, sigma

    def embed(self, y_hat: torch.Tensor) -> torch.Tensor:
        half = avg_pool2(y_hat)
        a = avg_pool2(half)
        b = F.relu(self.branch_b(half))
        c = F.relu(self.branch_c2(F.relu(self.branch_c1(y_hat))))
        fused = torch.cat([a, b, c], dim=1)
        for i, layer in enumerate(self.fusion):
            fused = layer(fused)
            if i < 2:
                fused = F.relu(fused)
        pooled = fused.mean(dim=(2, 3))
        return F.normalize(pooled, dim=1, eps=1e-12)

    # -- parameter groups -----------------------------------------------------

    def codec_modules(self) -> dict[str, nn.Module]:
        return {"ga": self.ga, "gs": self.gs, "ha": self.ha, "hs": self.hs,
                "z_density": self.z_density}

    def adapter_parameters(self):
        for mod in (self.branch_b, self.branch_c1, self.branch_c2, self.fusion):
            yield from mod.parameters()

    def codec_parameters(self):
        for mod in self.codec_modules().values():
            yield from mod.parameters()
