"""Image <-> ``.spc`` encoding and decoding."""

from dataclasses import dataclass

import numpy as np

from . import entropy_models as em
from . import map_codec
from .bitstream.container import CodedImage, as_f32, pack, unpack
from .errors import DecodeError, FormatError
from .range_coder import RangeDecoder, RangeEncoder, freeze_gaussian_tables, table_from_cdf
from .semantic_prior import SemanticMap, SemanticPrior, extract_features, pool_prior, synthesize

MAX_DENSITY_SYMBOLS = 1 << 15


@dataclass
class EncodeResult:
    data: bytes
    coded: CodedImage
    prior: SemanticPrior
    symbols: np.ndarray
    hyper_symbols: np.ndarray


def density_tables(params, prefix):
    """One frozen table per channel of a factorized density."""
    fd = em.FactorizedDensity(params, prefix)
    lo, hi = fd.quantile_bounds()
    tables = []
    for k in range(fd.channels):
        a, b = int(lo[k]), int(hi[k])
        if b - a + 1 > MAX_DENSITY_SYMBOLS:
            mid = (a + b) // 2
            a, b = mid - MAX_DENSITY_SYMBOLS // 2, mid + MAX_DENSITY_SYMBOLS // 2 - 1
        tables.append(table_from_cdf(lambda x, k=k: fd.cdf(np.broadcast_to(x, (fd.channels, x.size)))[k], a, b))
    return tables


def _code(symbols, tables):
    enc = RangeEncoder()
    for s, table in zip(symbols, tables):
        enc.encode_symbol(int(s), table)
    return enc.finish()


def _decode(data, tables):
    dec = RangeDecoder(data)
    try:
        out = [dec.decode_symbol(table) for table in tables]
    except (IndexError, ValueError) as exc:
        raise DecodeError(str(exc)) from None
    dec.finish()
    return np.array(out, dtype=np.int64)


def texture_tables(z_tilde, params, delta, presence):
    """Gaussian tables for the prior symbols of present columns, column-major order."""
    gp = em.hyper_decode(z_tilde, params, em.Quantizer(delta))
    cols = np.flatnonzero(presence)
    return freeze_gaussian_tables(gp.mean[:, cols].T, gp.scale[:, cols].T, delta), gp


def encode_texture(prior, params, delta):
    """Return ``(hyper_bytes, prior_bytes, t_symbols, z_symbols)`` for a prior."""
    q = em.Quantizer(delta)
    cols = np.flatnonzero(prior.presence)
    hyper = em.hyper_encode(prior, params, q)
    z_sym = em.symbols_of(hyper.quantized, delta)
    t_sym = em.symbols_of(prior.vectors, delta)
    ztables = density_tables(params, "density.z")
    hyper_bytes = _code(z_sym[:, cols].T.reshape(-1), ztables * cols.size)
    ttables, _ = texture_tables(z_sym * delta, params, delta, prior.presence)
    prior_bytes = _code(t_sym[:, cols].T.reshape(-1), ttables)
    return hyper_bytes, prior_bytes, t_sym, z_sym


def decode_texture(hyper_bytes, prior_bytes, params, delta, presence, channels):
    cols = np.flatnonzero(presence)
    ztables = density_tables(params, "density.z")
    zc = len(ztables)
    z_sym = np.zeros((zc, presence.size), dtype=np.int64)
    z_sym[:, cols] = _decode(hyper_bytes, ztables * cols.size).reshape(cols.size, zc).T
    ttables, _ = texture_tables(z_sym * delta, params, delta, presence)
    t_sym = np.zeros((channels, presence.size), dtype=np.int64)
    t_sym[:, cols] = _decode(prior_bytes, ttables).reshape(cols.size, channels).T
    return t_sym, z_sym


def encode_image(image, smap, params, config):
    delta = as_f32(config.delta)
    if smap.num_classes != config.num_classes:
        raise FormatError(f"map has {smap.num_classes} classes, model expects {config.num_classes}")
    if image.shape[1:] != smap.labels.shape:
        raise FormatError(f"image {image.shape[1:]} and map {smap.labels.shape} sizes differ")
    prior = pool_prior(extract_features(image, params), smap)
    hyper_bytes, prior_bytes, t_sym, z_sym = encode_texture(prior, params, delta)
    coded = CodedImage(
        smap.width, smap.height, smap.num_classes, config.channels, delta, prior.presence,
        map_codec.encode_map(smap.labels, smap.num_classes), hyper_bytes, prior_bytes)
    return EncodeResult(pack(coded), coded, prior, t_sym, z_sym)


@dataclass
class DecodeResult:
    image: np.ndarray
    prior: SemanticPrior
    smap: SemanticMap
    coded: CodedImage
    symbols: np.ndarray
    hyper_symbols: np.ndarray


def decode_prior(coded, params, config):
    if (coded.channels, coded.num_classes) != (config.channels, config.num_classes):
        raise FormatError(
            f"stream has C={coded.channels}, N={coded.num_classes}; model has "
            f"C={config.channels}, N={config.num_classes}")
    labels, n = map_codec.decode_map(coded.map_segment)
    if labels.shape != (coded.height, coded.width) or n != coded.num_classes:
        raise FormatError("map segment disagrees with container header")
    smap = SemanticMap(labels, n)
    if not np.array_equal(smap.presence(), coded.presence):
        raise FormatError("presence bitmap disagrees with the decoded map")
    t_sym, z_sym = decode_texture(
        coded.hyper_segment, coded.prior_segment, params, coded.delta, coded.presence, coded.channels)
    return SemanticPrior(t_sym * coded.delta, coded.presence), smap, t_sym, z_sym


def decode_image(data, params, config, reference=None, swap_class=None):
    """Decode ``.spc`` bytes; optionally swap one region's prior with ``reference``'s."""
    from .semantic_prior import swap_region_prior

    coded = unpack(data)
    prior, smap, t_sym, z_sym = decode_prior(coded, params, config)
    if swap_class is not None:
        prior = swap_region_prior(prior, reference, swap_class)
    image = synthesize(prior, smap, params, config.use_coords)
    return DecodeResult(image, prior, smap, coded, t_sym, z_sym)
