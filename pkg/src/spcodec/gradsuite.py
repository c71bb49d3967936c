"""Finite-difference gradient suites for every operator and the full losses."""

import zlib
from dataclasses import dataclass

import numpy as np

from . import entropy_models as em
from .model import CodecConfig, init_params
from .numerics import ParamStore, check_gradients
from .numerics import tensor as T
from .synthetic import make_scene
from .trainer import draw_noise, rd_graph

TOLERANCE = 1e-4
PROBES = 10
# loss-level suites sum thousands of bits; a smaller step drowns in roundoff
LOSS_STEP = 1e-4


def _away_from_kinks(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, x + np.sign(x + 1e-12) * 2 * margin, x)


OPERATORS = {
    "add": lambda P, r: T.add(P["a"], P["b"]),
    "sub": lambda P, r: T.sub(P["a"], P["b"]),
    "mul": lambda P, r: T.mul(P["a"], P["b"]),
    "div": lambda P, r: T.div(P["a"], T.add(T.abs_(P["b"]), 0.5)),
    "neg": lambda P, r: T.neg(P["a"]),
    "abs": lambda P, r: T.abs_(P["a"]),
    "square": lambda P, r: T.square(P["a"]),
    "relu": lambda P, r: T.relu(P["a"]),
    "exp": lambda P, r: T.exp(P["a"]),
    "softplus": lambda P, r: T.softplus(P["a"]),
    "sigmoid": lambda P, r: T.sigmoid(P["a"]),
    "tanh": lambda P, r: T.tanh(P["a"]),
    "log2": lambda P, r: T.log2(T.add(T.square(P["a"]), 0.1), floor=1e-12),
    "normal_cdf": lambda P, r: T.normal_cdf(P["a"]),
    "clamp_min": lambda P, r: T.clamp_min(P["a"], 0.0),
    "sum": lambda P, r: T.sum_(P["a"], axis=1),
    "mean": lambda P, r: T.mean(P["a"], axis=0),
    "reshape": lambda P, r: T.reshape(P["a"], (-1,)),
    "concat": lambda P, r: T.concat([P["a"], P["b"]], axis=0),
    "take": lambda P, r: T.take(P["a"], [2, 0, 2], axis=1),
    "matmul": lambda P, r: T.matmul(P["a"], T.reshape(P["b"], (4, 3))),
    "channel_mix": lambda P, r: T.channel_mix(P["x"], P["w"], P["bias"]),
    "conv3x3": lambda P, r: T.conv3x3(P["img"], P["k"], P["kb"]),
    "segment_mean": lambda P, r: T.segment_mean(P["img"], r["labels"], 5),
    "gather_columns": lambda P, r: T.gather_columns(P["a"], r["labels"][:2, :3]),
}


@dataclass
class SuiteResult:
    name: str
    probes: list

    @property
    def max_error(self):
        return max(p.rel_error for p in self.probes)

    @property
    def passed(self):
        return self.max_error <= TOLERANCE


def operator_suite(op, seed=0):
    rng = np.random.default_rng(zlib.crc32(op.encode()) + seed)
    store = ParamStore()
    for name, shape in (("a", (3, 4)), ("b", (3, 4))):
        store.add(name, _away_from_kinks(rng, shape))
    for name, shape in (("x", (4, 2, 3)), ("w", (5, 4)), ("bias", (5,)), ("img", (2, 6, 5)),
                        ("k", (3, 2, 3, 3)), ("kb", (3,))):
        store.add(name, rng.normal(size=shape))
    extra = {"labels": rng.integers(0, 4, size=(6, 5))}
    weights = {}

    def graph(P, r):
        out = OPERATORS[op](P, r)
        if out.shape not in weights:
            weights[out.shape] = np.random.default_rng(seed + 7).normal(size=out.shape)
        return T.sum_(T.mul(out, weights[out.shape]))

    return SuiteResult(op, check_gradients(graph, store, extra, PROBES, 1e-3, rng))


def rate_suite(seed=0):
    """Total bits w.r.t. the hyper networks and factorized density, train mode."""
    rng = np.random.default_rng(seed)
    q = em.Quantizer(0.01)
    params = init_params(CodecConfig(), seed)
    t = rng.normal(0.0, 0.05, size=(64, 19))
    presence = rng.random(19) < 0.8
    t *= presence
    noise = draw_noise(rng, 64, 19, q.step)

    def graph(P, _):
        _, _, pb, hb = em.rate_graph(t, P, presence, q, "train", noise=noise)
        return T.add(T.sum_(pb), T.sum_(hb))

    names = params.names("hyper.") + params.names("density.z")
    return SuiteResult("rate", check_gradients(graph, params, None, PROBES, LOSS_STEP, rng, names))


def rd_loss_suite(seed=0, size=16):
    """Full rate-distortion loss on a small scene w.r.t. every codec parameter."""
    rng = np.random.default_rng(seed)
    q = em.Quantizer(0.01)
    image, labels = make_scene(rng, size, 19)
    params = init_params(CodecConfig(), seed)
    noise = draw_noise(rng, 64, 19, q.step)

    def graph(P, _):
        return rd_graph(P, image, labels, 19, q, 1e-3, noise)

    return SuiteResult("rd_loss", check_gradients(graph, params, None, PROBES, LOSS_STEP, rng))


def run_all(seed=0):
    results = [operator_suite(op, seed) for op in sorted(OPERATORS)]
    results.append(rate_suite(seed))
    results.append(rd_loss_suite(seed))
    return results
