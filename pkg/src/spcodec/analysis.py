"""Channel-correlation study, rate reports and the hyperprior ablation."""

import csv
import io
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import entropy_models as em
from .bitstream.container import SEGMENTS, unpack
from .codec import _code, decode_prior, density_tables, encode_texture, texture_tables
from .errors import CodecError
from .imageio import write_pgm
from .model import CodecConfig, init_params
from .range_coder import table_cross_entropy
from .semantic_prior import SemanticMap, SemanticPrior, extract_features, pool_prior
from .synthetic import correlated_priors
from .trainer import load_dataset, train_rate_model

log = logging.getLogger(__name__)

MIN_SAMPLES = 3


# -- correlation -------------------------------------------------------------

def pearson_matrix(samples):
    """Pearson correlation between the columns of ``samples`` (M, C).

    Channels with zero variance correlate 0 with every other channel and 1
    with themselves. The result is exactly symmetric.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise CodecError(f"need a (samples, channels) array with at least 2 rows, got {x.shape}")
    # constant channels are exact; mean subtraction alone can leave roundoff variance
    live = np.ptp(x, axis=0) > 0
    x = x - x.mean(axis=0)
    cov = x.T @ x / (x.shape[0] - 1)
    sd = np.sqrt(np.diag(cov))
    denom = np.where(np.outer(live, live), np.outer(sd, sd), 1.0)
    corr = np.where(np.outer(live, live), cov / denom, 0.0)
    corr = np.triu(corr, 1)
    corr = np.clip(corr + corr.T, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def class_priors(pairs, params, class_id, num_classes):
    """Prior vectors (M, C) of ``class_id`` over the pairs where it occurs."""
    rows = []
    for image, labels in pairs:
        smap = SemanticMap(labels, num_classes)
        if smap.presence()[class_id]:
            rows.append(pool_prior(extract_features(image, params), smap).vectors[:, class_id])
    return np.array(rows)


def channel_correlation(dataset, params, class_id, num_classes=19, limit=100, seed=0):
    """C x C correlation of one class's prior channels across images.

    ``dataset`` is a directory or a list of ``(image, labels)`` pairs. At
    most ``limit`` images are used, drawn at random with ``seed``.
    """
    pairs = load_dataset(dataset, num_classes) if isinstance(dataset, (str, Path)) else list(dataset)
    if not 0 <= class_id < num_classes:
        raise CodecError(f"class {class_id} outside [0, {num_classes})")
    if len(pairs) > limit:
        pick = np.random.default_rng(seed).choice(len(pairs), size=limit, replace=False)
        pairs = [pairs[i] for i in sorted(pick)]
    samples = class_priors(pairs, params, class_id, num_classes)
    if len(samples) == 0:
        raise CodecError(f"class {class_id} does not occur in the dataset")
    if len(samples) < MIN_SAMPLES:
        raise CodecError(f"class {class_id} occurs in only {len(samples)} images; need {MIN_SAMPLES}")
    return pearson_matrix(samples)


def mean_abs_offdiag(corr):
    mask = ~np.eye(corr.shape[0], dtype=bool)
    return float(np.abs(corr[mask]).mean())


def matrix_csv(matrix):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\r\n")
    for row in matrix:
        writer.writerow([repr(float(v)) for v in row])
    return out.getvalue()


def heatmap_gray(matrix):
    """8-bit gray levels of a matrix whose values lie in [-1, 1]; -1 -> 0, 1 -> 255."""
    m = np.clip(np.asarray(matrix, dtype=np.float64), -1.0, 1.0)
    return np.floor((m + 1.0) * 127.5 + 0.5).astype(np.uint8)


def export_heatmap(matrix, stem):
    """Write ``stem.csv`` and ``stem.pgm``; returns both paths."""
    stem = Path(stem)
    csv_path, pgm_path = stem.with_suffix(".csv"), stem.with_suffix(".pgm")
    csv_path.write_text(matrix_csv(matrix), newline="")
    write_pgm(pgm_path, heatmap_gray(matrix))
    return csv_path, pgm_path


# -- rate report -------------------------------------------------------------

@dataclass
class RateReport:
    width: int
    height: int
    bytes: dict
    prior_symbols: int
    hyper_symbols: int
    region_prior_bits: dict = field(default_factory=dict)
    region_hyper_bits: dict = field(default_factory=dict)

    @property
    def pixels(self):
        return self.width * self.height

    def bpp(self, part):
        """Exact bits per pixel of ``"header"``, a segment name or ``"total"``."""
        size = sum(self.bytes.values()) if part == "total" else self.bytes[part]
        return Fraction(8 * size, self.pixels)

    def rows(self):
        rows = [("part", "bytes", "bpp")]
        for part in ("header",) + SEGMENTS + ("total",):
            size = sum(self.bytes.values()) if part == "total" else self.bytes[part]
            rows.append((part, size, f"{float(self.bpp(part)):.6f}"))
        return rows

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\r\n")
        writer.writerows(self.rows())
        writer.writerow(())
        writer.writerows([("symbols", "count"), ("prior", self.prior_symbols), ("hyperprior", self.hyper_symbols)])
        if self.region_prior_bits:
            writer.writerow(())
            writer.writerow(("class", "prior_bits", "hyperprior_bits"))
            for k in sorted(self.region_prior_bits):
                writer.writerow((k, f"{self.region_prior_bits[k]:.3f}", f"{self.region_hyper_bits[k]:.3f}"))
        return out.getvalue()

    def to_text(self):
        lines = [f"{self.width}x{self.height} pixels"]
        lines += [f"{part:<11} {size:>8} B  {bpp:>10} bpp" for part, size, bpp in self.rows()[1:]]
        lines.append(f"symbols: prior {self.prior_symbols}, hyperprior {self.hyper_symbols}")
        if self.region_prior_bits:
            lines.append("per-class bits (prior / hyperprior):")
            lines += [f"  {k:>3}  {self.region_prior_bits[k]:10.2f}  {self.region_hyper_bits[k]:8.2f}"
                      for k in sorted(self.region_prior_bits)]
        return "\n".join(lines)


def rate_report(data, params=None, config=None):
    """Break a ``.spc`` stream down by segment; per-class bits need the model."""
    coded = unpack(data)
    present = int(coded.presence.sum())
    sizes = {"header": coded.header_bytes}
    sizes.update({name: len(seg) for name, seg in coded.segments().items()})
    report = RateReport(coded.width, coded.height, sizes, coded.channels * present,
                        coded.channels // em.CHANNEL_REDUCTION * present)
    if params is None:
        return report
    config = config or CodecConfig(coded.channels, coded.num_classes, coded.delta)
    _, _, t_sym, z_sym = decode_prior(coded, params, config)
    cols = np.flatnonzero(coded.presence)
    ttables, _ = texture_tables(z_sym * coded.delta, params, coded.delta, coded.presence)
    ztables = density_tables(params, "density.z")
    c = coded.channels
    for i, k in enumerate(cols):
        report.region_prior_bits[int(k)] = table_cross_entropy(t_sym[:, k], ttables[i * c:(i + 1) * c])
        report.region_hyper_bits[int(k)] = table_cross_entropy(z_sym[:, k], ztables)
    return report


# -- ablation ----------------------------------------------------------------

@dataclass
class AblationResult:
    hyperprior_bits: float
    factorized_bits: float
    columns: int
    hyperprior_curve: list
    factorized_curve: list

    @property
    def saving(self):
        return 1.0 - self.hyperprior_bits / self.factorized_bits


def ablation_data(config):
    """Train and test prior columns (C, M) from the shared-mixing correlated generator."""
    rng = np.random.default_rng(config.seed)
    mixing = rng.normal(size=(config.channels, config.factors))
    make = lambda m: correlated_priors(rng, m, config.channels, config.factors, config.snr,  # noqa: E731
                                       config.signal_scale, mixing).T
    return make(config.samples), make(config.test_samples)


def coded_texture_bits(vectors, params, delta, variant):
    """Range-coded texture bits of prior columns under one variant."""
    if variant == "hyperprior":
        prior = SemanticPrior(vectors, np.ones(vectors.shape[1], dtype=bool))
        hyper_bytes, prior_bytes, _, _ = encode_texture(prior, params, delta)
        return 8 * (len(hyper_bytes) + len(prior_bytes))
    tables = density_tables(params, "density.t")
    symbols = em.symbols_of(vectors, delta)
    return 8 * len(_code(symbols.T.reshape(-1), tables * vectors.shape[1]))


def run_ablation(config, progress=None):
    """Train both entropy-model variants on correlated priors and code a held-out set."""
    codec = CodecConfig(config.channels, config.num_classes, config.delta)
    q = codec.quantizer
    train_cols, test_cols = ablation_data(config)
    results = {}
    for variant in ("hyperprior", "factorized"):
        params = init_params(codec, config.seed, factorized_prior=True)
        curve = train_rate_model(train_cols, params, q, variant, config.steps, config.lr,
                                 np.random.default_rng(config.seed + 1), progress)
        results[variant] = coded_texture_bits(test_cols, params, codec.delta, variant), curve
        log.info("%s: %d bits on %d columns", variant, results[variant][0], test_cols.shape[1])
    return AblationResult(results["hyperprior"][0], results["factorized"][0], test_cols.shape[1],
                          results["hyperprior"][1], results["factorized"][1])
