"""Fixed-point cumulative frequency tables."""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

PRECISION_BITS = 16
TOTAL = 1 << PRECISION_BITS
NUM_SCALES = 64
MEAN_STEPS = 16
TAIL_SIGMAS = 16
MAX_SCALE_STEPS = 256.0


@dataclass(frozen=True)
class CdfTable:
    """Cumulative counts for symbols ``q_min..q_max`` (plus an optional escape slot).

    ``cdf`` has ``num_slots + 1`` entries, starts at 0 and ends at ``total``.
    The escape slot, when present, is the last slot.
    """

    q_min: int
    cdf: tuple
    has_escape: bool
    total: int = TOTAL

    @property
    def num_symbols(self):
        return len(self.cdf) - 1 - int(self.has_escape)

    @property
    def q_max(self):
        return self.q_min + self.num_symbols - 1

    def counts(self):
        return np.diff(np.asarray(self.cdf, dtype=np.int64))

    def shifted(self, offset):
        return CdfTable(self.q_min + offset, self.cdf, self.has_escape, self.total)

    def probability(self, value):
        index = value - self.q_min
        if not 0 <= index < self.num_symbols:
            index = self.num_symbols
        return (self.cdf[index + 1] - self.cdf[index]) / self.total


def quantize_counts(probabilities, total=TOTAL):
    """Scale probabilities to integer counts summing to ``total``, each >= 1.

    Rounding uses largest remainders; any surplus created by the >= 1 floor is
    taken back from the largest counts. Ties break by index.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    n = p.size
    if n == 0:
        raise ValueError("empty alphabet")
    if n > total:
        raise ValueError(f"{n} symbols do not fit a {total}-count table")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and non-negative")
    mass = p.sum()
    ideal = p / mass * total if mass > 0 else np.full(n, total / n)
    counts = np.floor(ideal).astype(np.int64)
    remainder = ideal - counts
    counts = np.maximum(counts, 1)
    diff = total - int(counts.sum())
    if diff > 0:
        order = np.lexsort((np.arange(n), -remainder))
        counts[order[:diff]] += 1
    while diff < 0:
        order = np.lexsort((np.arange(n), -counts))
        room = counts[order] - 1
        take = np.minimum(room, 1)
        idx = order[take > 0][:-diff]
        counts[idx] -= 1
        diff += idx.size
    return counts


def build_table(probabilities, q_min=0, escape_mass=0.0):
    """Freeze a distribution over ``q_min..q_min+len-1`` into a :class:`CdfTable`.

    A positive ``escape_mass`` adds an escape slot for out-of-range values.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    has_escape = escape_mass > 0
    if has_escape:
        p = np.append(p, escape_mass)
    counts = quantize_counts(p)
    cdf = np.concatenate([[0], np.cumsum(counts)])
    return CdfTable(int(q_min), tuple(int(c) for c in cdf), has_escape)


# -- Gaussian tables --------------------------------------------------------

def scale_table(delta):
    """64 geometric scales from 0.1*delta to 256*delta."""
    lo = 0.1 * delta
    return lo * (MAX_SCALE_STEPS / 0.1) ** (np.arange(NUM_SCALES) / (NUM_SCALES - 1))


def snap_scale_index(sigma, delta):
    ratio = math.log(MAX_SCALE_STEPS / 0.1) / (NUM_SCALES - 1)
    idx = np.rint(np.log(np.asarray(sigma, dtype=np.float64) / (0.1 * delta)) / ratio)
    return np.clip(idx, 0, NUM_SCALES - 1).astype(np.int64)


def snap_mean_steps(mu, delta):
    """Mean in units of delta/16, rounded half away from zero."""
    x = np.asarray(mu, dtype=np.float64) / delta * MEAN_STEPS
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def snap_gaussian(mu, sigma, delta):
    """Snapped (mu, sigma) actually used to build coding tables."""
    steps = snap_mean_steps(mu, delta)
    return steps * (delta / MEAN_STEPS), scale_table(delta)[snap_scale_index(sigma, delta)]


def unit_gaussian_pmf(offsets, mu, sigma):
    """Mass of unit-width bins centred on integer ``offsets`` under N(mu, sigma)."""
    v = np.abs(np.asarray(offsets, dtype=np.float64) - mu)
    return ndtr((0.5 - v) / sigma) - ndtr((-0.5 - v) / sigma)


@lru_cache(maxsize=4096)
def _gaussian_template(frac, scale_ratio):
    mu = frac / MEAN_STEPS
    lo = math.floor(mu - TAIL_SIGMAS * scale_ratio)
    hi = math.ceil(mu + TAIL_SIGMAS * scale_ratio)
    offsets = np.arange(lo, hi + 1)
    p = unit_gaussian_pmf(offsets, mu, scale_ratio)
    tail = max(1.0 - float(p.sum()), 1.0 / TOTAL)
    return build_table(p, lo, escape_mass=tail)


def freeze_gaussian_tables(mu, sigma, delta):
    """One :class:`CdfTable` per entry of ``mu``/``sigma`` (flattened, row-major).

    Means snap to a delta/16 grid and scales to :func:`scale_table` before the
    table is built, so any party holding the same decoded hyperprior builds
    identical tables.
    """
    steps = snap_mean_steps(mu, delta).reshape(-1)
    sidx = snap_scale_index(sigma, delta).reshape(-1)
    ratios = scale_table(1.0)
    tables = []
    for s, k in zip(steps.tolist(), sidx.tolist()):
        base, frac = divmod(s, MEAN_STEPS)
        tables.append(_gaussian_template(frac, float(ratios[k])).shifted(base))
    return tables


def table_from_cdf(cdf_fn, q_min, q_max):
    """Table from a continuous cumulative ``cdf_fn`` over unit bins ``q_min..q_max``."""
    edges = np.arange(q_min, q_max + 2) - 0.5
    c = np.asarray(cdf_fn(edges), dtype=np.float64)
    p = np.clip(np.diff(c), 0.0, None)
    tail = max(float(c[0]) + 1.0 - float(c[-1]), 1.0 / TOTAL)
    return build_table(p, q_min, escape_mass=tail)
