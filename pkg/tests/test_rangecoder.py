import numpy as np
import pytest

from latentsearch.errors import SymbolRangeError, TruncatedStream
from latentsearch.rangecoder import (
    TOTAL,
    CdfTable,
    cdf_from_pmf,
    quantize_pmf,
    range_decode,
    range_encode,
)


class TestQuantizePmf:
    def test_sums_to_total_with_floor_one(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 512))
            pmf = rng.random(n) ** 3
            freq = quantize_pmf(pmf)
            assert freq.sum() == TOTAL
            assert freq.min() >= 1

    def test_zero_mass_symbols_still_codable(self):
        pmf = np.asarray([0.0, 1.0, 0.0])
        freq = quantize_pmf(pmf)
        assert freq.sum() == TOTAL
        assert freq[0] >= 1 and freq[2] >= 1

    def test_degenerate_pmf_becomes_uniform(self):
        freq = quantize_pmf(np.zeros(7))
        assert freq.sum() == TOTAL
        assert freq.min() >= TOTAL // 7 - 7

    def test_deterministic(self, rng):
        pmf = rng.random(100)
        assert np.array_equal(quantize_pmf(pmf), quantize_pmf(pmf))


class TestCdfTable:
    def test_well_formedness_enforced(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            CdfTable(np.asarray([0, 5, 5, TOTAL]))
        with pytest.raises(ValueError, match="start at 0"):
            CdfTable(np.asarray([1, TOTAL]))

    def test_offset_range(self):
        t = cdf_from_pmf(np.ones(4), offset=-2)
        assert (t.min_value, t.max_value) == (-2, 1)
        assert t.index_of(-2) == 0
        with pytest.raises(SymbolRangeError):
            t.index_of(2)


class TestRoundTrip:
    def test_empty_sequence(self):
        t = cdf_from_pmf(np.ones(256))
        data = range_encode([], [t])
        assert len(data) <= 8
        assert range_decode(data, [t], 0) == []

    def test_uniform_256_entropy_bound(self, rng):
        t = cdf_from_pmf(np.ones(256))
        symbols = rng.integers(0, 256, size=10_000).tolist()
        data = range_encode(symbols, [t])
        assert 9_960 <= len(data) <= 10_050
        assert range_decode(data, [t], len(symbols)) == symbols

    def test_thousand_random_fuzz_cases(self):
        rng = np.random.default_rng(77)
        for trial in range(1000):
            n_tables = int(rng.integers(1, 4))
            tables = [
                cdf_from_pmf(
                    rng.random(int(rng.integers(2, 300))) ** 4,
                    offset=int(rng.integers(-300, 300)),
                )
                for _ in range(n_tables)
            ]
            count = int(rng.integers(0, 64))
            ids = rng.integers(0, n_tables, size=count).tolist()
            vals = [
                int(rng.integers(tables[i].min_value, tables[i].max_value + 1)) for i in ids
            ]
            data = range_encode(vals, tables, ids)
            assert range_decode(data, tables, count, ids) == vals, f"trial {trial}"

    def test_skewed_distributions(self, rng):
        # heavy skew stresses the underflow path
        for pmf in ([1, 65535], [1, 1, 65534], [65534, 1, 1]):
            t = CdfTable(np.concatenate([[0], np.cumsum(pmf)]))
            for pattern in ([0] * 500, [1] * 500, list(rng.integers(0, len(pmf), 500))):
                data = range_encode(pattern, [t])
                assert range_decode(data, [t], len(pattern)) == pattern

    def test_single_symbol_alphabet(self):
        # degenerate but valid: one symbol with probability 1 costs ~0 bits
        t = cdf_from_pmf(np.ones(1), offset=42)
        data = range_encode([42] * 1000, [t])
        assert len(data) <= 8
        assert range_decode(data, [t], 1000) == [42] * 1000

    def test_out_of_range_symbol_rejected(self):
        t = cdf_from_pmf(np.ones(4))
        with pytest.raises(SymbolRangeError, match="outside coded range"):
            range_encode([4], [t])

    def test_truncated_payload_is_explicit_error(self, rng):
        t = cdf_from_pmf(np.ones(256))
        symbols = rng.integers(0, 256, size=500).tolist()
        data = range_encode(symbols, [t])
        with pytest.raises(TruncatedStream):
            range_decode(data[: len(data) // 2], [t], len(symbols))
        with pytest.raises(TruncatedStream):
            range_decode(b"\x01", [t], 5)

    def test_encoded_length_near_information(self, rng):
        # ~1.06 bits/symbol source coded by the matching table
        t = cdf_from_pmf(np.asarray([1.0, 3.0, 12.0, 48.0]))
        freq = np.diff(t.cum.astype(np.int64))
        p = freq / freq.sum()
        symbols = rng.choice(4, size=20_000, p=p).tolist()
        data = range_encode(symbols, [t])
        info_bits = sum(-np.log2(p[s]) for s in symbols)
        assert len(data) <= info_bits / 8 + 32
        assert range_decode(data, [t], len(symbols)) == symbols
