import numpy as np
import pytest
from scipy import integrate, stats

from spcodec import entropy_models as em
from spcodec.errors import CodecError, ShapeError
from spcodec.model import CodecConfig, init_params
from spcodec.numerics import ParamStore, adam_step, check_gradients, forward_backward
from spcodec.numerics import tensor as T
from spcodec.semantic_prior import SemanticPrior

Q = em.Quantizer(0.01)


@pytest.fixture(scope="module")
def params():
    return init_params(CodecConfig(channels=64, num_classes=19), seed=11)


def random_prior(seed, n=19, absent=()):
    rng = np.random.default_rng(seed)
    presence = np.ones(n, dtype=bool)
    presence[list(absent)] = False
    vectors = rng.normal(0.0, 0.05, size=(64, n)) * presence
    return SemanticPrior(vectors, presence)


class TestQuantize:
    def test_rounding_examples(self):
        assert em.quantize(0.0234, Q) == pytest.approx(0.02, abs=1e-15)
        assert em.quantize(-0.005, Q) == pytest.approx(-0.01, abs=1e-15)
        assert em.quantize(0.005, Q) == pytest.approx(0.01, abs=1e-15)

    def test_train_noise_bounds_and_bias(self):
        v = np.random.default_rng(0).normal(size=100_000)
        d = em.quantize(v, Q, "train", np.random.default_rng(1)) - v
        assert np.all(np.abs(d) < 0.005)
        assert abs(d.mean()) < 1e-4

    def test_train_mode_seeded(self):
        v = np.linspace(-1, 1, 50)
        a = em.quantize(v, Q, "train", np.random.default_rng(3))
        assert np.array_equal(a, em.quantize(v, Q, "train", np.random.default_rng(3)))

    def test_bad_step(self):
        with pytest.raises(CodecError):
            em.Quantizer(0.0)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            em.quantize(1.0, Q, "eval")


class TestHyperNetworks:
    def test_shapes(self, params):
        hp = em.hyper_encode(random_prior(0), params, Q)
        assert hp.latents.shape == hp.quantized.shape == (4, 19)
        gp = em.hyper_decode(hp, params, Q)
        assert gp.mean.shape == gp.scale.shape == (64, 19)

    def test_zero_prior_zero_bias(self, params):
        zeros = SemanticPrior(np.zeros((64, 19)), np.ones(19, bool))
        assert not np.any(em.hyper_encode(zeros, params, Q).latents)

    def test_indivisible_channels(self, params):
        with pytest.raises(CodecError):
            em.hyper_widths(40)
        with pytest.raises(CodecError):
            em.hyper_encode_graph(np.zeros((40, 3)), params.params, np.ones(3, bool))

    def test_decode_shape_mismatch(self, params):
        with pytest.raises(ShapeError):
            em.hyper_decode(np.zeros((5, 19)), params, Q)

    def test_absent_columns_zero(self, params):
        hp = em.hyper_encode(random_prior(1, absent=(2, 7)), params, Q)
        assert not np.any(hp.latents[:, [2, 7]])

    def test_permutation_equivariance(self, params):
        prior = random_prior(2)
        perm = np.random.default_rng(5).permutation(19)
        z = em.hyper_encode(prior, params, Q).latents
        zp = em.hyper_encode(SemanticPrior(prior.vectors[:, perm], prior.presence[perm]), params, Q).latents
        np.testing.assert_allclose(zp, z[:, perm], rtol=0, atol=1e-14)

    def test_region_independence(self, params):
        z = np.random.default_rng(6).normal(0, 0.05, size=(4, 19))
        gp = em.hyper_decode(z, params, Q)
        z2 = z.copy()
        z2[:, 4] += 0.3
        gp2 = em.hyper_decode(z2, params, Q)
        changed = np.any(gp.mean != gp2.mean, axis=0) | np.any(gp.scale != gp2.scale, axis=0)
        assert changed.tolist() == [k == 4 for k in range(19)]

    def test_scale_floor(self, params):
        z = np.random.default_rng(7).normal(0, 20.0, size=(4, 19))
        assert em.hyper_decode(z, params, Q).scale.min() >= 0.001


def standard_normal_bin(lo, hi):
    return integrate.quad(lambda x: np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi), lo, hi, epsabs=1e-14)[0]


class TestGaussianBits:
    def test_unit_example(self):
        p, bits = em.gaussian_bits(np.array([0]), em.GaussianParams(0.0, 1.0), 1.0)
        oracle = standard_normal_bin(-0.5, 0.5)
        assert p[0] == pytest.approx(oracle, abs=1e-12)
        assert p[0] == pytest.approx(0.38292, abs=1e-5)
        assert bits == pytest.approx(1.3848, abs=1e-4)

    def test_symmetry(self):
        q = np.arange(1, 200)
        gp = em.GaussianParams(0.0, 0.37)
        p_pos, _ = em.gaussian_bits(q, gp, 0.01)
        p_neg, _ = em.gaussian_bits(-q, gp, 0.01)
        np.testing.assert_allclose(p_pos, p_neg, rtol=0, atol=1e-12)

    def test_sums_to_one(self):
        q = np.arange(-1_000_000, 1_000_001)
        p, _ = em.gaussian_bits(q, em.GaussianParams(0.013, 0.2), 0.01)
        assert 1 - 1e-9 <= p.sum() <= 1 + 1e-12

    def test_far_tail_bits_finite(self):
        p, bits = em.gaussian_bits(np.array([10**6]), em.GaussianParams(0.0, 0.001), 0.01)
        assert p[0] == 0.0 and bits == pytest.approx(40.0)

    def test_matches_scipy_cdf(self):
        rng = np.random.default_rng(8)
        q = rng.integers(-50, 50, size=200)
        mu, sigma = rng.normal(0, 0.1, size=200), rng.uniform(0.001, 0.3, size=200)
        p, _ = em.gaussian_bits(q, em.GaussianParams(mu, sigma), 0.01)
        oracle = stats.norm.cdf(0.01 * (q + 0.5), mu, sigma) - stats.norm.cdf(0.01 * (q - 0.5), mu, sigma)
        np.testing.assert_allclose(p, oracle, rtol=1e-9, atol=1e-15)


def train_density(samples_units, steps, rng, lr=1e-2):
    store = ParamStore()
    em.init_density(store, rng, "d", samples_units.shape[0])
    names = list(store.params)
    for _ in range(steps):
        u = em.uniform_noise(rng, samples_units.shape, 1.0)

        def graph(P, _):
            p = em.density_likelihood_graph(T.Tensor(samples_units + u), P, "d")
            return T.mean(T.neg(T.log2(p, floor=em.PROB_FLOOR)))

        _, grads = forward_backward(graph, store, names=names)
        adam_step(store, grads, lr=lr, names=names)
    return em.FactorizedDensity(store, "d")


class TestFactorizedDensity:
    def fresh(self, channels=3, seed=0):
        store = ParamStore()
        em.init_density(store, np.random.default_rng(seed), "d", channels)
        return em.FactorizedDensity(store, "d")

    def test_monotone_on_grid(self):
        fd = self.fresh()
        c = fd.cdf(np.linspace(-200, 200, 10_000))
        assert np.all(np.diff(c, axis=1) >= 0)

    def test_limits(self):
        fd = self.fresh()
        c = fd.cdf(np.array([-1e4, 1e4]))
        assert np.all(c[:, 0] < 1e-6) and np.all(c[:, 1] > 1 - 1e-6)

    def test_pmf_non_negative_and_normalized(self):
        fd = self.fresh()
        q = np.arange(-3000, 3001)
        p, bits = em.factorized_bits(np.broadcast_to(q, (3, q.size)), fd)
        assert np.all(p >= 0) and np.isfinite(bits)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_quantile_bounds_hold_tail_mass(self):
        fd = self.fresh()
        lo, hi = fd.quantile_bounds()
        assert np.all(fd.cdf(lo[:, None].astype(float)).diagonal() <= 1e-9 + 1e-12)
        assert np.all(1 - fd.cdf(hi[:, None].astype(float)).diagonal() <= 1e-9 + 1e-12)

    def test_trained_matches_gaussian_entropy(self):
        rng = np.random.default_rng(0)
        delta = 0.1
        fd = train_density(rng.normal(size=(1, 4000)) / delta, 400, rng)
        q = np.arange(-80, 81)
        p_oracle, _ = em.gaussian_bits(q, em.GaussianParams(0.0, 1.0), delta)
        entropy = -(p_oracle * np.log2(p_oracle)).sum()
        sym = em.symbols_of(rng.normal(size=(1, 20_000)), delta)
        _, bits = em.factorized_bits(sym, fd)
        assert abs(bits / sym.size - entropy) <= 0.05 * entropy


class TestRate:
    def test_additivity(self, params):
        _, _, total, br = em.rate(random_prior(3), params, Q)
        assert total == br.prior_bits + br.hyper_bits
        assert br.prior_bits == pytest.approx(br.region_prior_bits.sum(), rel=1e-12)

    def test_absent_columns_cost_nothing(self, params):
        _, _, _, br = em.rate(random_prior(4, absent=(0, 5, 18)), params, Q)
        assert np.all(br.region_prior_bits[[0, 5, 18]] == 0.0)
        assert np.all(br.region_hyper_bits[[0, 5, 18]] == 0.0)
        assert np.all(br.region_prior_bits[1:5] > 0)

    def test_region_locality(self, params):
        prior = random_prior(5)
        _, _, _, a = em.rate(prior, params, Q)
        bumped = prior.vectors.copy()
        bumped[:, 9] += 0.2
        _, _, _, b = em.rate(SemanticPrior(bumped, prior.presence), params, Q)
        same = np.arange(19) != 9
        assert np.array_equal(a.region_prior_bits[same], b.region_prior_bits[same])
        assert np.array_equal(a.region_hyper_bits[same], b.region_hyper_bits[same])

    def test_shrinking_toward_mean(self):
        rng = np.random.default_rng(9)
        mu = rng.normal(0, 0.05, size=(64, 19))
        sigma = rng.uniform(0.002, 0.05, size=(64, 19))
        t = mu + rng.normal(size=mu.shape) * sigma * 3
        gp = em.GaussianParams(em.symbols_of(mu, 0.01) * 0.01, sigma)
        previous = np.inf
        for s in np.linspace(1.0, 0.0, 11):
            shrunk = gp.mean + s * (t - gp.mean)
            _, bits = em.gaussian_bits(em.symbols_of(shrunk, 0.01), gp, 0.01)
            assert bits <= previous + 1e-9
            previous = bits

    def test_gradient_wrt_hyper_weights(self, params):
        prior = random_prior(6, absent=(3,))
        noise = em.uniform_noise(np.random.default_rng(1), (64, 19), 0.01), em.uniform_noise(
            np.random.default_rng(2), (4, 19), 0.01)

        def graph(P, _):
            _, _, pb, hb = em.rate_graph(prior.vectors, P, prior.presence, Q, "train", noise=noise)
            return T.add(T.sum_(pb), T.sum_(hb))

        names = params.names("hyper.")
        probes = check_gradients(graph, params.copy(), None, probes=10, h=1e-4,
                                 rng=np.random.default_rng(3), names=names)
        assert max(p.rel_error for p in probes) <= 1e-4

    def test_train_mode_unbiased_at_bin_centres(self):
        rng = np.random.default_rng(10)
        delta = 0.01
        for sigma_steps in (5, 8, 20):
            sigma = sigma_steps * delta
            for q in (0, 3, -7):
                x = q * delta
                test_bits = -np.log2(em.gaussian_pmf(q, 0.0, sigma, delta))
                u = em.uniform_noise(rng, 10_000, delta)
                noisy = x + u
                p = np.asarray(em.gaussian_likelihood_graph(noisy, 0.0, sigma, delta).data)
                train_bits = -np.log2(p).mean()
                assert abs(train_bits - test_bits) <= 0.02 * test_bits
