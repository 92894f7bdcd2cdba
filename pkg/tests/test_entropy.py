import numpy as np
import pytest

from latentsearch.entropy import (
    FactorizedPrior,
    GaussianConditional,
    default_scale_grid,
    discretized_gaussian_pmf,
    estimate_rate,
)
from latentsearch.errors import SymbolRangeError
from latentsearch.numerics import round_quantize
from latentsearch.rangecoder import TOTAL, cdf_from_pmf


def random_gaussian_case(rng, shape, sigma_range=(0.2, 8.0), spread=20):
    mu = rng.normal(0, 2, size=shape).astype(np.float32)
    sigma = rng.uniform(*sigma_range, size=shape).astype(np.float32)
    centered = rng.integers(-spread, spread + 1, size=shape)
    y_hat = (centered + np.asarray(round_quantize(mu))).astype(np.float32)
    return y_hat, mu, sigma


class TestScaleGrid:
    def test_default_grid_bounds(self):
        g = default_scale_grid()
        assert len(g) == 64
        assert abs(float(g[0]) - 0.11) < 1e-6
        assert abs(float(g[-1]) - 256.0) < 1e-3

    def test_sigma_clamped_to_grid(self):
        gc = GaussianConditional()
        grid_lo = float(gc.scale_grid[0])
        levels = gc.level_of(np.asarray([1e-9, 0.05, grid_lo, 1.0, 256.0, 1e6]))
        assert levels[0] == 0 and levels[1] == 0 and levels[2] == 0
        assert levels[-1] == 63 and levels[-2] == 63

    def test_level_is_smallest_not_below(self):
        gc = GaussianConditional()
        grid = gc.scale_grid.astype(np.float64)
        for s in [0.2, 0.5, 3.0, 100.0]:
            lvl = int(gc.level_of(np.asarray([s]))[0])
            assert grid[lvl] >= s - 1e-12
            if lvl > 0:
                assert grid[lvl - 1] < s


class TestGaussianConditional:
    def test_round_trip(self, rng):
        gc = GaussianConditional()
        y, mu, sigma = random_gaussian_case(rng, (1, 16, 5, 7))
        data = gc.encode(y, mu, sigma)
        assert np.array_equal(gc.decode(data, mu, sigma), y)

    def test_single_symbol_one_bit(self):
        # symbol with quantized probability 1/2 carries exactly 1 bit
        t = cdf_from_pmf(np.asarray([1.0, 1.0]), offset=0)
        assert t.bits_of(0) == 1.0
        assert t.bits_of(1) == 1.0

    def test_uniform_256_hundred_symbols_800_bits(self, rng):
        fp = FactorizedPrior([cdf_from_pmf(np.ones(256), offset=0)])
        z = rng.integers(0, 256, size=(1, 1, 10, 10)).astype(np.float32)
        assert abs(fp.bits(z) - 800.0) < 1e-9

    def test_out_of_range_rejected(self):
        gc = GaussianConditional()
        y = np.full((1, 1, 1, 1), 200.0, dtype=np.float32)
        mu = np.zeros_like(y)
        sigma = np.ones_like(y)
        with pytest.raises(SymbolRangeError):
            gc.encode(y, mu, sigma)
        with pytest.raises(SymbolRangeError):
            gc.bits(y, mu, sigma)

    def test_mu_fraction_does_not_break_round_trip(self, rng):
        # y_hat symbols are centered on round(mu); fractional mu must cancel
        gc = GaussianConditional()
        mu = rng.uniform(-3, 3, size=(1, 4, 4, 4)).astype(np.float32)
        sigma = rng.uniform(0.3, 2, size=(1, 4, 4, 4)).astype(np.float32)
        y = round_quantize(mu + rng.normal(0, 2, size=mu.shape).astype(np.float32))
        data = gc.encode(y, mu, sigma)
        assert np.array_equal(gc.decode(data, mu, sigma), y)


class TestFactorizedPrior:
    def test_channel_tables_round_trip(self, rng):
        fp = FactorizedPrior.from_gaussian_params(
            rng.normal(0, 1, 8), rng.uniform(0.5, 3, 8), -63, 64
        )
        z = rng.integers(-10, 11, size=(1, 8, 3, 3)).astype(np.float32)
        data = fp.encode(z)
        assert np.array_equal(fp.decode(data, z.shape), z)

    def test_channel_count_checked(self, rng):
        fp = FactorizedPrior.from_gaussian_params([0.0], [1.0], -7, 8)
        with pytest.raises(ValueError, match="channels"):
            fp.encode(np.zeros((1, 2, 2, 2), dtype=np.float32))

    def test_pmf_probabilities_are_cdf_differences(self):
        pmf = discretized_gaussian_pmf(0.0, 1.0, -8, 8)
        assert pmf.sum() <= 1.0 + 1e-12
        assert pmf[8] == pmf.max()  # symmetric peak at 0
        assert np.all(pmf >= 0)


class TestEstimateRate:
    def test_estimate_close_to_actual_over_100_latents(self):
        rng = np.random.default_rng(99)
        gc = GaussianConditional()
        fp = FactorizedPrior.from_gaussian_params(
            rng.normal(0, 1, 8), rng.uniform(0.5, 3, 8), -63, 64
        )
        for _ in range(100):
            shape = (1, 16, int(rng.integers(4, 9)), int(rng.integers(4, 9)))
            y, mu, sigma = random_gaussian_case(rng, shape, sigma_range=(0.3, 12.0), spread=25)
            z = rng.integers(-8, 9, size=(1, 8, 2, 2)).astype(np.float32)
            est = estimate_rate(y, z, mu, sigma, gc, fp)
            actual = 8 * (len(gc.encode(y, mu, sigma)) + len(fp.encode(z)))
            assert abs(actual - est) <= 0.02 * est + 64, (actual, est)

    def test_rate_additivity(self, rng):
        gc = GaussianConditional()
        fp = FactorizedPrior.from_gaussian_params([0.0, 1.0], [1.0, 2.0], -31, 32)
        y, mu, sigma = random_gaussian_case(rng, (1, 4, 4, 4))
        z = rng.integers(-3, 4, size=(1, 2, 2, 2)).astype(np.float32)
        total = estimate_rate(y, z, mu, sigma, gc, fp)
        assert abs(total - (gc.bits(y, mu, sigma) + fp.bits(z))) < 1e-9


class TestSigmaPositivity:
    def test_sigma_clamp_fuzz(self, rng, small_model):
        from latentsearch.codec import hyper_path

        w = small_model.codec
        for _ in range(1000):
            y = rng.normal(0, 3, size=(1, w.m_ch, 4, 4)).astype(np.float32)
            _, _, sigma = hyper_path(y, w)
            assert float(sigma.min()) > 0.0
