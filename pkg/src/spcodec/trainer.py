"""Rate-distortion training.

The objective per image is ``lam * bits + distortion(y, y_hat)`` where the
bits come from the train-mode (noisy) rate model and the default distortion
is pixel-wise mean squared error. Batch size is one image.
"""

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import entropy_models as em
from .errors import CodecError, FormatError
from .imageio import read_pgm, read_ppm
from .model import CodecConfig, init_params
from .numerics import adam_step, forward_backward
from .numerics import tensor as T
from .semantic_prior import synnet, texnet

log = logging.getLogger(__name__)


def mse(y, y_hat):
    return T.mean(T.square(T.sub(y, y_hat)))


@dataclass
class TrainConfig:
    channels: int = 64
    num_classes: int = 19
    delta: float = 0.01
    lam: float = 1.0
    lr: float = 1e-4
    epochs: int = 10
    seed: int = 0
    dataset: str = ""
    use_coords: bool = True
    # ablation (rate-only) settings
    steps: int = 3000
    samples: int = 400
    test_samples: int = 200
    factors: int = 4
    snr: float = 10.0
    signal_scale: float = 0.03
    extras: dict = field(default_factory=dict)

    @property
    def codec(self):
        return CodecConfig(self.channels, self.num_classes, self.delta, use_coords=self.use_coords)


_ALIASES = {"c": "channels", "n": "num_classes", "λ": "lam", "lambda": "lam", "δ": "delta", "Δ": "delta"}


def parse_config(text, base_dir=None):
    """Parse ``key=value`` lines (``#`` comments allowed) into a :class:`TrainConfig`."""
    kinds = {f.name: f.type for f in fields(TrainConfig) if f.name != "extras"}
    values, extras = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key.lower(), key.lower())
        if key not in kinds:
            extras[key] = value
            continue
        kind = kinds[key]
        try:
            if kind in (bool, "bool"):
                values[key] = value.lower() in ("1", "true", "yes", "on")
            elif kind in (int, "int"):
                values[key] = int(value)
            elif kind in (float, "float"):
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise FormatError(f"config line {lineno}: bad value for {key}: {value!r}") from None
    if base_dir is not None and values.get("dataset"):
        path = Path(values["dataset"])
        values["dataset"] = str(path if path.is_absolute() else Path(base_dir) / path)
    return TrainConfig(**values, extras=extras)


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def load_dataset(directory, num_classes):
    """Read every ``X.ppm`` with a matching ``X.pgm``; unreadable pairs are skipped."""
    pairs = []
    for ppm in sorted(Path(directory).glob("*.ppm")):
        try:
            image = read_ppm(ppm)
            labels = read_pgm(ppm.with_suffix(".pgm"))
            if image.shape[1:] != labels.shape:
                raise FormatError(f"size mismatch {image.shape[1:]} vs {labels.shape}")
            if labels.max() >= num_classes:
                raise FormatError(f"label {labels.max()} >= {num_classes}")
        except (OSError, FormatError) as exc:
            log.warning("skipping %s: %s", ppm.name, exc)
            continue
        pairs.append((image, labels))
    if not pairs:
        raise CodecError(f"no readable image/map pairs in {directory}")
    return pairs


@dataclass
class LossTerms:
    loss: float = 0.0
    bits: float = 0.0
    prior_bits: float = 0.0
    hyper_bits: float = 0.0
    distortion: float = 0.0


def rd_graph(P, image, labels, num_classes, q, lam, noise, use_coords=True, distortion=mse, terms=None):
    presence = np.bincount(labels.reshape(-1), minlength=num_classes) > 0
    feats = texnet(image, P)
    t = T.segment_mean(feats, labels, num_classes)
    t_tilde, _, prior_bits, hyper_bits = em.rate_graph(t, P, presence, q, "train", noise=noise)
    bits = T.add(T.sum_(prior_bits), T.sum_(hyper_bits))
    recon = synnet(T.gather_columns(t_tilde, labels), P, use_coords)
    d = distortion(image, recon)
    loss = T.add(T.mul(bits, lam), d)
    if terms is not None:
        terms.loss, terms.bits, terms.distortion = loss.item(), bits.item(), d.item()
        terms.prior_bits, terms.hyper_bits = float(prior_bits.data.sum()), float(hyper_bits.data.sum())
    return loss


def draw_noise(rng, channels, num_classes, step):
    return (em.uniform_noise(rng, (channels, num_classes), step),
            em.uniform_noise(rng, (channels // em.CHANNEL_REDUCTION, num_classes), step))


def rd_loss(image, labels, params, lam, q, num_classes=None, rng=None, noise=None,
            use_coords=True, distortion=mse):
    """Loss, gradients for every codec parameter, and the loss terms of one image.

    ``num_classes`` defaults to one more than the largest label.
    """
    if lam < 0:
        raise CodecError(f"lambda must be non-negative, got {lam}")
    image = np.asarray(image, dtype=np.float64)
    labels = np.asarray(labels)
    if image.ndim != 3 or image.shape[1:] != labels.shape:
        raise CodecError(f"image {image.shape} and map {labels.shape} do not pair up")
    n = int(labels.max()) + 1 if num_classes is None else num_classes
    channels = params["texnet.conv2.w"].shape[0]
    if noise is None:
        noise = draw_noise(np.random.default_rng() if rng is None else rng, channels, n, q.step)
    terms = LossTerms()
    names = [k for k in params.params if not k.startswith("density.t")]
    loss, grads = forward_backward(
        lambda P, _: rd_graph(P, image, labels, n, q, lam, noise, use_coords, distortion, terms),
        params, names=names)
    return loss, grads, terms


@dataclass
class TrainResult:
    params: object
    config: CodecConfig
    history: list
    best_epoch: int


def train(config, pairs=None, progress=None):
    """Train every codec network on a dataset; returns the best-epoch parameters."""
    codec = config.codec
    if pairs is None:
        pairs = load_dataset(config.dataset, config.num_classes)
    params = init_params(codec, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    q = codec.quantizer
    names = list(params.params)
    history, best, best_loss = [], None, np.inf
    for epoch in range(config.epochs):
        sums = LossTerms()
        for i in rng.permutation(len(pairs)):
            image, labels = pairs[i]
            noise = draw_noise(rng, codec.channels, codec.num_classes, q.step)
            terms = LossTerms()
            _, grads = forward_backward(
                lambda P, _: rd_graph(P, image, labels, codec.num_classes, q, config.lam, noise,
                                      codec.use_coords, mse, terms),
                params, names=names)
            adam_step(params, grads, lr=config.lr, names=names)
            for f in fields(LossTerms):
                setattr(sums, f.name, getattr(sums, f.name) + getattr(terms, f.name))
        row = {"epoch": epoch}
        row.update({f.name: getattr(sums, f.name) / len(pairs) for f in fields(LossTerms)})
        history.append(row)
        log.info("epoch %d loss %.6g bits %.1f distortion %.6g", epoch, row["loss"], row["bits"], row["distortion"])
        if progress is not None:
            progress(row)
        if row["loss"] < best_loss:
            best_loss, best = row["loss"], (epoch, params.copy())
    best_epoch, best_params = best
    return TrainResult(best_params, codec, history, best_epoch)


# -- rate-only training (ablation) ------------------------------------------

def stack_priors(priors):
    """Concatenate (C, N) priors column-wise; returns vectors and presence."""
    vectors = np.concatenate([p.vectors[:, p.presence] for p in priors], axis=1)
    return vectors, np.ones(vectors.shape[1], dtype=bool)


def train_rate_model(vectors, params, q, variant, steps, lr, rng, progress=None):
    """Fit the entropy model of one variant to fixed prior columns by minimizing train-mode bits.

    ``variant`` is ``"hyperprior"`` (hyper networks + ``density.z``) or
    ``"factorized"`` (``density.t`` only).
    """
    presence = np.ones(vectors.shape[1], dtype=bool)
    if variant == "hyperprior":
        names = params.names("hyper.") + params.names("density.z")
    elif variant == "factorized":
        names = params.names("density.t")
    else:
        raise ValueError(f"unknown variant {variant!r}")
    per_column = []
    for step in range(steps):
        if variant == "hyperprior":
            def graph(P, _):
                _, _, pb, hb = em.rate_graph(vectors, P, presence, q, "train", rng=rng)
                return T.mul(T.add(T.sum_(pb), T.sum_(hb)), 1.0 / vectors.shape[1])
        else:
            def graph(P, _):
                _, bits = em.factorized_rate_graph(vectors, P, presence, q, "train", rng=rng)
                return T.mul(T.sum_(bits), 1.0 / vectors.shape[1])
        loss, grads = forward_backward(graph, params, names=names)
        adam_step(params, grads, lr=lr, names=names)
        per_column.append(loss)
        if progress is not None and (step % 100 == 0 or step == steps - 1):
            progress(variant, step, loss)
    return per_column
