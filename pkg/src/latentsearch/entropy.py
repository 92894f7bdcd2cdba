"""Entropy models: the per-channel factorized prior for the hyper-latent and
the mean-scale Gaussian conditional for the main latent.

Both models reduce to quantized 16-bit CDF tables consumed by the range
coder, and rate estimation reads the very same tables, so estimated bits
differ from the actual bitstream length only by coder overhead.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .errors import SymbolRangeError
from .numerics import round_quantize
from .rangecoder import TOTAL_BITS, CdfTable, cdf_from_pmf, range_decode, range_encode

# Default symbol range for the main latent: 256 centered symbols.
Y_MIN, Y_MAX = -127, 128

# Default geometric sigma grid.
SCALE_MIN, SCALE_MAX, SCALE_LEVELS = 0.11, 256.0, 64


def default_scale_grid(
    smin: float = SCALE_MIN, smax: float = SCALE_MAX, levels: int = SCALE_LEVELS
) -> np.ndarray:
    return np.geomspace(smin, smax, levels).astype(np.float32)


def discretized_gaussian_pmf(mean: float, sigma: float, lo: int, hi: int) -> np.ndarray:
    """P(k) = Phi((k - mean + 0.5)/sigma) - Phi((k - mean - 0.5)/sigma) for k in [lo, hi]."""
    k = np.arange(lo, hi + 1, dtype=np.float64)
    sigma = max(float(sigma), 1e-9)
    upper = ndtr((k - mean + 0.5) / sigma)
    lower = ndtr((k - mean - 0.5) / sigma)
    return upper - lower


class FactorizedPrior:
    """Per-channel CDF tables over integer symbols for the hyper-latent."""

    def __init__(self, tables: list[CdfTable]):
        if not tables:
            raise ValueError("factorized prior needs at least one channel table")
        self.tables = tables

    @property
    def n_channels(self) -> int:
        return len(self.tables)

    @classmethod
    def from_gaussian_params(
        cls, means: np.ndarray, sigmas: np.ndarray, lo: int, hi: int
    ) -> "FactorizedPrior":
        tables = [
            cdf_from_pmf(discretized_gaussian_pmf(float(m), float(s), lo, hi), offset=lo)
            for m, s in zip(means, sigmas)
        ]
        return cls(tables)

    def _flatten(self, z_hat: np.ndarray) -> tuple[list[int], list[int]]:
        if z_hat.shape[1] != self.n_channels:
            raise ValueError(
                f"hyper-latent has {z_hat.shape[1]} channels, prior has {self.n_channels}"
            )
        symbols = z_hat.astype(np.int64).ravel().tolist()
        per_channel = z_hat.shape[2] * z_hat.shape[3]
        ids = np.repeat(np.arange(self.n_channels), per_channel).tolist()
        return symbols, ids

    def encode(self, z_hat: np.ndarray) -> bytes:
        symbols, ids = self._flatten(z_hat)
        return range_encode(symbols, self.tables, ids)

    def decode(self, data: bytes, shape: tuple[int, int, int, int]) -> np.ndarray:
        _, c, h, w = shape
        if c != self.n_channels:
            raise ValueError(f"shape asks for {c} channels, prior has {self.n_channels}")
        ids = np.repeat(np.arange(c), h * w).tolist()
        symbols = range_decode(data, self.tables, c * h * w, ids)
        return np.asarray(symbols, dtype=np.float32).reshape(shape)

    def bits(self, z_hat: np.ndarray) -> float:
        if z_hat.shape[1] != self.n_channels:
            raise ValueError(
                f"hyper-latent has {z_hat.shape[1]} channels, prior has {self.n_channels}"
            )
        total = 0.0
        sym = z_hat.astype(np.int64)
        for c, table in enumerate(self.tables):
            idx = sym[:, c, :, :].ravel() - table.offset
            if idx.size == 0:
                continue
            if idx.min() < 0 or idx.max() >= table.n_symbols:
                raise SymbolRangeError(
                    f"hyper-latent symbol outside [{table.min_value}, {table.max_value}] "
                    f"in channel {c}"
                )
            cum = table.cum.astype(np.int64)
            freqs = (cum[idx + 1] - cum[idx]).astype(np.float64)
            total += float(np.sum(TOTAL_BITS - np.log2(freqs)))
        return total


class GaussianConditional:
    """Mean-scale Gaussian model over centered symbols, quantized per sigma level.

    The sigma grid is geometric; each level carries one CDF table over the
    symbol range [Y_MIN, Y_MAX]. Sigma values are clamped to grid bounds and
    mapped to the smallest level that is >= sigma, identically on the encode
    and decode sides.
    """

    def __init__(self, scale_grid: np.ndarray | None = None):
        grid = default_scale_grid() if scale_grid is None else np.asarray(scale_grid, np.float64)
        if grid.ndim != 1 or grid.shape[0] < 1 or not (np.diff(grid) > 0).all():
            raise ValueError("scale grid must be a strictly increasing 1-D array")
        self.scale_grid = grid.astype(np.float32)
        self.tables = [
            cdf_from_pmf(discretized_gaussian_pmf(0.0, float(s), Y_MIN, Y_MAX), offset=Y_MIN)
            for s in grid
        ]
        self._freq_matrix: np.ndarray | None = None

    def level_of(self, sigma: np.ndarray) -> np.ndarray:
        """Index of the smallest grid level >= sigma, after clamping to grid bounds."""
        s = np.clip(np.asarray(sigma, dtype=np.float64), self.scale_grid[0], self.scale_grid[-1])
        idx = np.searchsorted(self.scale_grid.astype(np.float64), s, side="left")
        return np.minimum(idx, len(self.tables) - 1).astype(np.int64)

    def _symbols(self, y_hat: np.ndarray, mu: np.ndarray) -> np.ndarray:
        if y_hat.shape != mu.shape:
            raise ValueError(f"latent shape {y_hat.shape} != mu shape {mu.shape}")
        return (y_hat - round_quantize(mu)).astype(np.int64)

    def encode(self, y_hat: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> bytes:
        symbols = self._symbols(y_hat, mu).ravel().tolist()
        ids = self.level_of(sigma).ravel().tolist()
        return range_encode(symbols, self.tables, ids)

    def decode(
        self, data: bytes, mu: np.ndarray, sigma: np.ndarray
    ) -> np.ndarray:
        ids = self.level_of(sigma).ravel().tolist()
        symbols = range_decode(data, self.tables, len(ids), ids)
        centered = np.asarray(symbols, dtype=np.float32).reshape(mu.shape)
        return centered + round_quantize(mu)

    def bits(self, y_hat: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> float:
        symbols = self._symbols(y_hat, mu).ravel()
        ids = self.level_of(sigma).ravel()
        idx = symbols - Y_MIN
        if idx.size == 0:
            return 0.0
        if idx.min() < 0 or idx.max() > Y_MAX - Y_MIN:
            raise SymbolRangeError(f"latent symbol outside [{Y_MIN}, {Y_MAX}]")
        if self._freq_matrix is None:
            self._freq_matrix = np.stack(
                [np.diff(t.cum.astype(np.int64)) for t in self.tables]
            ).astype(np.float64)
        freqs = self._freq_matrix[ids, idx]
        return float(np.sum(TOTAL_BITS - np.log2(freqs)))


def estimate_rate(
    y_hat: np.ndarray,
    z_hat: np.ndarray,
    mu: np.ndarray,
    sigma: np.ndarray,
    gaussian: GaussianConditional,
    prior: FactorizedPrior,
) -> float:
    """Total -log2 probability in bits, from the same quantized CDFs the coder uses.

    Raises SymbolRangeError when any symbol is outside its table.
    """
    return gaussian.bits(y_hat, mu, sigma) + prior.bits(z_hat)
