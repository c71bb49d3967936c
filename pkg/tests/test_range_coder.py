import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from spcodec.errors import DecodeError
from spcodec.range_coder import (
    build_table, decode, encode, freeze_gaussian_tables, snap_gaussian, table_cross_entropy,
)
from spcodec.range_coder.tables import TOTAL, quantize_counts, scale_table


def entropy_bits(p):
    p = np.asarray(p, dtype=np.float64)
    p = p[p > 0] / p.sum()
    return float(-(p * np.log2(p)).sum())


class TestBuildTable:
    def test_uniform_256(self):
        assert set(build_table(np.full(256, 1 / 256)).counts().tolist()) == {256}

    def test_exact_fixed_point(self):
        assert build_table([0.75, 0.25]).counts().tolist() == [49152, 16384]

    def test_empty_alphabet(self):
        with pytest.raises(ValueError):
            build_table([])

    def test_tiny_masses_get_one_count(self):
        counts = quantize_counts([1.0] + [1e-12] * 100)
        assert counts.min() == 1 and counts.sum() == TOTAL

    def test_entropy_close_to_input(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = rng.dirichlet(np.full(rng.integers(2, 300), 0.7))
            q = build_table(p).counts() / TOTAL
            cross = float(-(p * np.log2(q)).sum())
            assert abs(cross - entropy_bits(p)) <= 0.01

    def test_deterministic(self):
        p = np.random.default_rng(1).random(50)
        assert build_table(p, 3, 0.01) == build_table(p, 3, 0.01)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=400), st.floats(0, 0.5))
    def test_strictly_increasing(self, probs, esc):
        table = build_table(probs, escape_mass=esc)
        assert table.cdf[0] == 0 and table.cdf[-1] == TOTAL
        assert all(b > a for a, b in zip(table.cdf, table.cdf[1:]))


class TestCoder:
    def test_uniform_1000_symbols(self):
        table = build_table(np.full(256, 1 / 256))
        symbols = np.random.default_rng(0).integers(0, 256, 1000)
        data = encode(symbols, table)
        assert 1000 <= len(data) <= 1005
        assert decode(data, table, 1000) == symbols.tolist()

    def test_empty(self):
        assert encode([], []) == b""
        assert decode(b"", []) == []

    def test_skewed_long_sequence(self):
        rng = np.random.default_rng(2)
        p = rng.dirichlet(np.full(40, 0.3))
        table = build_table(p, q_min=-20)
        symbols = rng.choice(40, size=100_000, p=p) - 20
        data = encode(symbols, table)
        assert decode(data, table, symbols.size) == symbols.tolist()
        h = table_cross_entropy(symbols, table)
        assert h <= 8 * len(data) <= h + 32
        assert 8 * len(data) <= 1.005 * h

    def test_escape_symbols(self):
        table = build_table([0.5, 0.3, 0.2], q_min=0, escape_mass=0.01)
        symbols = [0, 1, -7, 2, 2**31 - 1, -(2**31), 2, 5]
        data = encode(symbols, table)
        assert decode(data, table, len(symbols)) == symbols
        h = table_cross_entropy(symbols, table)
        assert h <= 8 * len(data) <= h + 32

    def test_out_of_range_without_escape(self):
        with pytest.raises(ValueError):
            encode([5], build_table([0.5, 0.5]))

    def test_identical_bytes_across_runs(self):
        table = build_table([0.1, 0.2, 0.7], escape_mass=0.001)
        symbols = np.random.default_rng(9).integers(-2, 5, 5000)
        assert encode(symbols, table) == encode(symbols, table)

    def test_truncated_stream_errors(self):
        table = build_table(np.random.default_rng(4).random(30))
        symbols = np.random.default_rng(4).integers(0, 30, 200)
        data = encode(symbols, table)
        with pytest.raises(DecodeError):
            decode(data[:-3], table, 200)

    def test_corrupt_streams_never_crash(self):
        rng = np.random.default_rng(6)
        table = build_table(rng.random(12), escape_mass=0.01)
        symbols = rng.integers(0, 12, 300)
        data = bytearray(encode(symbols, table))
        detected = 0
        for trial in range(200):
            bad = bytearray(data)
            bad[rng.integers(len(bad))] ^= 1 << int(rng.integers(8))
            try:
                out = decode(bytes(bad), table, 300)
            except DecodeError:
                detected += 1
            else:
                assert len(out) == 300
        assert detected > 0

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_round_trip_property(self, data):
        n_sym = data.draw(st.integers(1, 50))
        probs = data.draw(st.lists(st.floats(0, 1), min_size=n_sym, max_size=n_sym))
        esc = data.draw(st.sampled_from([0.0, 1e-4, 0.05]))
        table = build_table(probs, q_min=data.draw(st.integers(-100, 100)), escape_mass=esc)
        lo, hi = (table.q_min - 10, table.q_max + 10) if esc else (table.q_min, table.q_max)
        symbols = data.draw(st.lists(st.integers(lo, hi), max_size=300))
        coded = encode(symbols, table)
        assert decode(coded, table, len(symbols)) == symbols
        h = table_cross_entropy(symbols, table)
        assert h - 1e-6 <= 8 * len(coded) <= h + 32


class TestGaussianTables:
    def test_snapping_shares_tables(self):
        delta = 0.01
        scales = scale_table(delta)
        a, b = freeze_gaussian_tables([0.0, 0.0], [scales[20] * 1.001, scales[20] * 0.999], delta)
        assert a == b

    def test_mode_has_largest_count(self):
        for mu, sigma in [(0.0, 0.05), (0.123, 0.02), (-0.3, 0.5)]:
            (table,) = freeze_gaussian_tables([mu], [sigma], 0.01)
            counts = table.counts()[: table.num_symbols]
            assert counts[int(np.round(mu / 0.01)) - table.q_min] == counts.max()

    def test_bounds_cover_16_sigma(self):
        (table,) = freeze_gaussian_tables([0.2], [0.05], 0.01)
        mu, sigma = snap_gaussian(0.2, 0.05, 0.01)
        assert table.q_min * 0.01 <= mu - 16 * sigma
        assert table.q_max * 0.01 >= mu + 16 * sigma

    def test_coded_bits_match_model_estimate(self):
        rng = np.random.default_rng(8)
        delta = 0.01
        mu = rng.normal(0, 0.3, 10_000)
        sigma = np.exp(rng.uniform(np.log(0.002), np.log(0.5), 10_000))
        mu_s, sigma_s = snap_gaussian(mu, sigma, delta)
        symbols = np.rint(rng.normal(mu_s, sigma_s) / delta).astype(np.int64)
        tables = freeze_gaussian_tables(mu, sigma, delta)
        data = encode(symbols, tables)
        assert decode(data, tables) == symbols.tolist()
        v = np.abs(symbols * delta - mu_s)
        p = stats.norm.cdf((delta / 2 - v) / sigma_s) - stats.norm.cdf((-delta / 2 - v) / sigma_s)
        model_bits = float(-np.log2(np.maximum(p, 2.0**-40)).sum())
        assert abs(8 * len(data) - model_bits) <= 0.02 * model_bits + 32
