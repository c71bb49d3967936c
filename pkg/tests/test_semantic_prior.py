import numpy as np
import pytest

from spcodec.errors import CodecError, ShapeError
from spcodec.model import CodecConfig, init_params
from spcodec.semantic_prior import (
    SemanticMap, SemanticPrior, broadcast_prior, extract_features, pool_prior, swap_region_prior, synthesize,
)


@pytest.fixture(scope="module")
def params():
    return init_params(CodecConfig(channels=64, num_classes=19), seed=3)


def brute_force_means(features, labels, n):
    c, h, w = features.shape
    out = np.zeros((c, n))
    for k in range(n):
        for ch in range(c):
            total, count = 0.0, 0
            for y in range(h):
                for x in range(w):
                    if labels[y, x] == k:
                        total += features[ch, y, x]
                        count += 1
            out[ch, k] = total / count if count else 0.0
    return out


class TestExtractFeatures:
    def test_shape(self, params):
        assert extract_features(np.random.default_rng(0).random((3, 16, 16)), params).shape == (64, 16, 16)

    def test_zero_image_zero_features(self, params):
        assert not np.any(extract_features(np.zeros((3, 12, 9)), params))

    def test_undersized(self, params):
        with pytest.raises(ShapeError):
            extract_features(np.zeros((3, 7, 16)), params)

    def test_deterministic(self):
        image = np.random.default_rng(1).random((3, 10, 10))
        a = extract_features(image, init_params(CodecConfig(), seed=9))
        b = extract_features(image, init_params(CodecConfig(), seed=9))
        assert np.array_equal(a, b)


class TestPool:
    def test_constant_region(self):
        labels = np.array([[0, 0], [1, 1]])
        feats = np.zeros((4, 2, 2))
        feats[:, 1, :] = 1.0
        prior = pool_prior(feats, SemanticMap(labels, 3))
        np.testing.assert_array_equal(prior.vectors[:, 1], 1.0)

    def test_two_pixel_average(self):
        feats = np.array([[[2.0, 4.0]]])
        assert pool_prior(feats, SemanticMap(np.array([[0, 0]]), 1)).vectors[0, 0] == 3.0

    def test_absent_class(self):
        prior = pool_prior(np.ones((2, 2, 2)), SemanticMap(np.zeros((2, 2), int), 4))
        assert prior.presence.tolist() == [True, False, False, False]
        assert not np.any(prior.vectors[:, 1:])

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            pool_prior(np.ones((2, 3, 3)), SemanticMap(np.zeros((2, 2), int), 1))

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            labels = rng.integers(0, 5, size=(8, 8))
            feats = rng.normal(size=(3, 8, 8))
            got = pool_prior(feats, SemanticMap(labels, 6)).vectors
            assert np.array_equal(got, brute_force_means(feats, labels, 6))


class TestBroadcast:
    def test_piecewise_constant_round_trip(self):
        rng = np.random.default_rng(2)
        smap = SemanticMap(rng.integers(0, 4, size=(6, 7)), 4)
        field = rng.normal(size=(5, 4))[:, smap.labels]
        np.testing.assert_allclose(broadcast_prior(pool_prior(field, smap), smap), field, rtol=1e-15, atol=0)

    def test_single_class(self):
        smap = SemanticMap(np.zeros((4, 4), int), 1)
        out = broadcast_prior(SemanticPrior(np.array([[1.5], [-2.0]]), [True]), smap)
        assert np.all(out == out[:, :1, :1])

    def test_projection(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            smap = SemanticMap(rng.integers(0, 6, size=(8, 8)), 6)
            prior = SemanticPrior(rng.normal(size=(3, 6)), smap.presence())
            once = broadcast_prior(prior, smap)
            twice = broadcast_prior(pool_prior(once, smap), smap)
            np.testing.assert_allclose(twice, once, rtol=0, atol=1e-15)

    def test_class_mismatch(self):
        with pytest.raises(ShapeError):
            broadcast_prior(SemanticPrior(np.zeros((2, 3)), [True] * 3), SemanticMap(np.zeros((2, 2), int), 4))


class TestSynthesize:
    def test_deterministic_and_clamped(self, params):
        rng = np.random.default_rng(5)
        smap = SemanticMap(rng.integers(0, 19, size=(12, 12)), 19)
        prior = SemanticPrior(rng.normal(size=(64, 19)), smap.presence())
        a = synthesize(prior, smap, params)
        assert np.array_equal(a, synthesize(prior, smap, params))
        assert a.shape == (3, 12, 12) and a.min() >= 0 and a.max() <= 1

    def test_single_class_without_coordinates(self, params):
        smap = SemanticMap(np.full((9, 11), 7), 19)
        prior = SemanticPrior(np.random.default_rng(6).normal(size=(64, 19)), smap.presence())
        out = synthesize(prior, smap, params, use_coords=False)
        np.testing.assert_allclose(out, np.broadcast_to(out[:, :1, :1], out.shape), rtol=0, atol=1e-12)

    def test_channel_mismatch(self, params):
        smap = SemanticMap(np.zeros((8, 8), int), 19)
        with pytest.raises(ShapeError):
            synthesize(SemanticPrior(np.zeros((16, 19)), smap.presence()), smap, params)


class TestSwap:
    def prior(self, seed):
        rng = np.random.default_rng(seed)
        return SemanticPrior(rng.normal(size=(64, 19)), np.ones(19, bool))

    def test_self_swap(self):
        p = self.prior(0)
        out = swap_region_prior(p, p, 3)
        assert np.array_equal(out.vectors, p.vectors)

    def test_touches_one_column(self):
        p, ref = self.prior(0), self.prior(1)
        out = swap_region_prior(p, ref, 3)
        assert np.array_equal(out.vectors[:, 3], ref.vectors[:, 3])
        changed = np.any(out.vectors != p.vectors, axis=0)
        assert changed.tolist() == [k == 3 for k in range(19)]

    def test_absent_reference_class(self):
        ref = self.prior(1)
        ref.presence[4] = False
        with pytest.raises(CodecError):
            swap_region_prior(self.prior(0), ref, 4)

    def test_decoded_difference_confined_to_region(self, params):
        hair = 13
        rng = np.random.default_rng(7)
        smap = SemanticMap(rng.integers(0, 19, size=(16, 16)), 19)
        p, ref = self.prior(0), self.prior(1)
        before = synthesize(p, smap, params, use_coords=False)
        after = synthesize(swap_region_prior(p, ref, hair), smap, params, use_coords=False)
        diff = np.any(before != after, axis=0)
        assert not np.any(diff[smap.labels != hair])
        assert np.any(diff[smap.labels == hair])
