"""Rate model for the texture layer.

The prior t (C x N) is summarized per region by a hyper-encoder into
z (C/16 x N). The quantized z is coded with a per-channel factorized
density; a hyper-decoder turns it into the mean and scale of a discretized
Gaussian for every entry of the quantized prior.

All graph-building functions accept either numpy arrays or
:class:`~spcodec.numerics.Tensor` values, so the same code serves inference
and training.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import CodecError, ShapeError
from .numerics import tensor as T

PROB_FLOOR = 2.0 ** -40
DENSITY_FILTERS = (1, 3, 3, 3, 1)
DENSITY_INIT_SCALE = 10.0
CHANNEL_REDUCTION = 16


@dataclass(frozen=True)
class Quantizer:
    step: float = 0.01

    def __post_init__(self):
        if not self.step > 0:
            raise CodecError(f"quantization step must be positive, got {self.step}")

    @property
    def sigma_min(self):
        return 0.1 * self.step


@dataclass
class GaussianParams:
    mean: np.ndarray
    scale: np.ndarray


@dataclass
class Hyperprior:
    latents: np.ndarray
    quantized: np.ndarray


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(values, q, mode="test", rng=None):
    """Round to the ``q.step`` grid (test) or add uniform noise of one step width (train)."""
    values = np.asarray(values, dtype=np.float64)
    if mode == "test":
        return q.step * round_half_away(values / q.step)
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    rng = np.random.default_rng() if rng is None else rng
    return values + uniform_noise(rng, values.shape, q.step)


def uniform_noise(rng, shape, step):
    """Uniform noise on the open interval (-step/2, step/2)."""
    u = rng.random(shape)
    u = np.where(u == 0.0, 0.5, u)
    return (u - 0.5) * step


def symbols_of(values, step):
    return round_half_away(np.asarray(values) / step).astype(np.int64)


# -- hyper networks ---------------------------------------------------------

def hyper_widths(channels):
    if channels % CHANNEL_REDUCTION:
        raise CodecError(f"channel count {channels} is not divisible by {CHANNEL_REDUCTION}")
    return (channels, channels // 2, channels // 8, channels // CHANNEL_REDUCTION), (
        channels // CHANNEL_REDUCTION, channels // 8, channels // 2, 2 * channels)


def init_hyper(store, rng, channels):
    enc, dec = hyper_widths(channels)
    for prefix, widths in (("hyper.enc", enc), ("hyper.dec", dec)):
        for i, (a, b) in enumerate(zip(widths, widths[1:]), start=1):
            gain = 2.0 if i < 3 else 1.0
            store.add(f"{prefix}{i}.w", rng.normal(0.0, np.sqrt(gain / a), size=(b, a)))
            store.add(f"{prefix}{i}.b", np.zeros(b))


def _mix_stack(x, P, prefix):
    for i in (1, 2, 3):
        x = T.channel_mix(x, P[f"{prefix}{i}.w"], P[f"{prefix}{i}.b"])
        if i < 3:
            x = T.relu(x)
    return x


def hyper_encode_graph(t, P, presence):
    t = T.as_tensor(t)
    if t.shape[0] % CHANNEL_REDUCTION:
        raise CodecError(f"channel count {t.shape[0]} is not divisible by {CHANNEL_REDUCTION}")
    z = _mix_stack(t, P, "hyper.enc")
    return T.mul(z, np.asarray(presence, dtype=np.float64)[None, :])


def hyper_decode_graph(z, P, q):
    out = _mix_stack(z, P, "hyper.dec")
    c = out.shape[0] // 2
    mean = T.take(out, np.arange(c), axis=0)
    scale = T.clamp_min(T.exp(T.take(out, np.arange(c, 2 * c), axis=0)), q.sigma_min)
    return mean, scale


def hyper_encode(prior, params, q=Quantizer()):
    """Hyperprior latents and their test-mode quantization for a prior."""
    z = hyper_encode_graph(prior.vectors, params.params, prior.presence).data
    return Hyperprior(z, quantize(z, q))


def hyper_decode(z_tilde, params, q=Quantizer()):
    z = z_tilde.quantized if isinstance(z_tilde, Hyperprior) else np.asarray(z_tilde, dtype=np.float64)
    expected = params["hyper.dec1.w"].shape[1]
    if z.ndim != 2 or z.shape[0] != expected:
        raise ShapeError("hyper_decode", f"expected ({expected}, N) hyperprior, got {z.shape}")
    mean, scale = hyper_decode_graph(z, params.params, q)
    return GaussianParams(mean.data, scale.data)


# -- discretized Gaussian ---------------------------------------------------

def gaussian_likelihood_graph(values, mean, scale, step):
    """Probability mass of the width-``step`` bin around ``values``."""
    v = T.abs_(T.sub(values, mean))
    upper = T.normal_cdf(T.div(T.sub(0.5 * step, v), scale))
    lower = T.normal_cdf(T.div(T.sub(-0.5 * step, v), scale))
    return T.sub(upper, lower)


def gaussian_pmf(symbols, mean, scale, step):
    v = np.abs(np.asarray(symbols, dtype=np.float64) * step - mean)
    return special.ndtr((0.5 * step - v) / scale) - special.ndtr((-0.5 * step - v) / scale)


def gaussian_bits(symbols, gp, step):
    """Per-symbol probabilities and total bits of integer grid indices.

    Probabilities are returned unfloored; the floor of 2**-40 is applied
    only inside the logarithm.
    """
    p = gaussian_pmf(symbols, gp.mean, gp.scale, step)
    return p, float(-np.log2(np.maximum(p, PROB_FLOOR)).sum())


# -- factorized density ------------------------------------------------------

def init_density(store, rng, prefix, channels, init_scale=DENSITY_INIT_SCALE):
    """Per-channel monotone cumulative model with 3-filter hidden layers."""
    f = DENSITY_FILTERS
    scale = init_scale ** (1.0 / (len(f) - 1))
    for k in range(len(f) - 1):
        init = np.log(np.expm1(1.0 / scale / f[k + 1]))
        store.add(f"{prefix}.matrix{k}", np.full((channels, f[k + 1], f[k]), init))
        store.add(f"{prefix}.bias{k}", rng.uniform(-0.5, 0.5, size=(channels, f[k + 1], 1)))
        if k < len(f) - 2:
            store.add(f"{prefix}.factor{k}", np.zeros((channels, f[k + 1], 1)))


def density_logits(x, P, prefix):
    """Logits of the cumulative at ``x`` (channels, M), in units of the quantization step."""
    x = T.reshape(x, (x.shape[0], 1, x.shape[1]))
    layers = len(DENSITY_FILTERS) - 1
    for k in range(layers):
        m = T.softplus(P[f"{prefix}.matrix{k}"])
        c, a, b = m.shape
        prod = T.mul(T.reshape(m, (c, a, b, 1)), T.reshape(x, (c, 1, b, x.shape[2])))
        x = T.add(T.sum_(prod, axis=2), P[f"{prefix}.bias{k}"])
        if k < layers - 1:
            x = T.add(x, T.mul(T.tanh(P[f"{prefix}.factor{k}"]), T.tanh(x)))
    return T.reshape(x, (x.shape[0], x.shape[2]))


def density_likelihood_graph(units, P, prefix):
    """Mass of unit bins centred on ``units`` (channels, M)."""
    units = T.as_tensor(units)
    lower = density_logits(T.sub(units, 0.5), P, prefix)
    upper = density_logits(T.add(units, 0.5), P, prefix)
    sign = np.where(lower.data + upper.data > 0, -1.0, 1.0)
    return T.abs_(T.sub(T.sigmoid(T.mul(upper, sign)), T.sigmoid(T.mul(lower, sign))))


class FactorizedDensity:
    """Read-only view of one factorized density inside a parameter store."""

    def __init__(self, params, prefix):
        self.params = params
        self.prefix = prefix

    @property
    def channels(self):
        return self.params[f"{self.prefix}.matrix0"].shape[0]

    def logits(self, units):
        units = np.asarray(units, dtype=np.float64)
        if units.ndim == 1:
            units = np.broadcast_to(units, (self.channels, units.size))
        return density_logits(T.Tensor(units), self.params.params, self.prefix).data

    def cdf(self, units):
        return special.expit(self.logits(units))

    def pmf(self, symbols):
        return density_likelihood_graph(np.asarray(symbols, dtype=np.float64), self.params.params, self.prefix).data

    def quantile_bounds(self, tail=1e-9):
        """Integer symbol range per channel outside which each tail holds < ``tail``."""
        target = np.log(tail) - np.log1p(-tail)
        lo = np.full(self.channels, -2.0 ** 40)
        hi = np.full(self.channels, 2.0 ** 40)
        bounds = []
        for goal in (target, -target):
            a, b = lo.copy(), hi.copy()
            for _ in range(90):
                mid = 0.5 * (a + b)
                below = self.logits(mid[:, None])[:, 0] < goal
                a = np.where(below, mid, a)
                b = np.where(below, b, mid)
            bounds.append(0.5 * (a + b))
        return np.floor(bounds[0]).astype(np.int64), np.ceil(bounds[1]).astype(np.int64)


def factorized_bits(symbols, fd):
    """Per-symbol probabilities and total bits of integer symbols (channels, M)."""
    p = fd.pmf(symbols)
    return p, float(-np.log2(np.maximum(p, PROB_FLOOR)).sum())


# -- rate -------------------------------------------------------------------

@dataclass
class RateBreakdown:
    prior_bits: float
    hyper_bits: float
    region_prior_bits: np.ndarray
    region_hyper_bits: np.ndarray

    @property
    def total_bits(self):
        return self.prior_bits + self.hyper_bits


def rate_graph(t, P, presence, q, mode="test", rng=None, noise=None):
    """Differentiable rate pipeline.

    Returns ``(t_tilde, z_tilde, prior_bits, hyper_bits)`` where the bit terms
    are (N,) tensors of per-region bits (zero for absent classes). In train
    mode the same noisy ``t_tilde`` feeds the rate term and any decoder.
    ``noise`` may supply the ``(noise_t, noise_z)`` draws explicitly.
    """
    t = T.as_tensor(t)
    mask = np.asarray(presence, dtype=np.float64)
    z = hyper_encode_graph(t, P, presence)
    if mode == "test":
        z_tilde = T.Tensor(quantize(z.data, q))
        t_tilde = T.Tensor(quantize(t.data, q))
    else:
        if noise is None:
            rng = np.random.default_rng() if rng is None else rng
            noise = (uniform_noise(rng, t.shape, q.step), uniform_noise(rng, z.shape, q.step))
        t_tilde = T.mul(T.add(t, noise[0]), mask[None, :])
        z_tilde = T.mul(T.add(z, noise[1]), mask[None, :])
    mean, scale = hyper_decode_graph(z_tilde, P, q)
    p_t = gaussian_likelihood_graph(t_tilde, mean, scale, q.step)
    prior_bits = T.mul(T.sum_(T.neg(T.log2(p_t, floor=PROB_FLOOR)), axis=0), mask)
    p_z = density_likelihood_graph(T.div(z_tilde, q.step), P, "density.z")
    hyper_bits = T.mul(T.sum_(T.neg(T.log2(p_z, floor=PROB_FLOOR)), axis=0), mask)
    return t_tilde, z_tilde, prior_bits, hyper_bits


def rate(prior, params, q=Quantizer(), mode="test", rng=None):
    """Quantized prior and hyperprior plus the bits both would cost."""
    t_tilde, z_tilde, prior_bits, hyper_bits = rate_graph(
        prior.vectors, params.params, prior.presence, q, mode, rng)
    breakdown = RateBreakdown(
        float(prior_bits.data.sum()), float(hyper_bits.data.sum()), prior_bits.data, hyper_bits.data)
    return t_tilde.data, z_tilde.data, breakdown.total_bits, breakdown


def factorized_rate_graph(t, P, presence, q, mode="test", rng=None, noise=None):
    """Ablation rate: the prior coded channel-wise by ``density.t`` with no hyperprior."""
    t = T.as_tensor(t)
    mask = np.asarray(presence, dtype=np.float64)
    if mode == "test":
        t_tilde = T.Tensor(quantize(t.data, q))
    else:
        if noise is None:
            rng = np.random.default_rng() if rng is None else rng
            noise = uniform_noise(rng, t.shape, q.step)
        t_tilde = T.add(t, noise)
    p = density_likelihood_graph(T.div(t_tilde, q.step), P, "density.t")
    bits = T.mul(T.sum_(T.neg(T.log2(p, floor=PROB_FLOOR)), axis=0), mask)
    return t_tilde, bits
