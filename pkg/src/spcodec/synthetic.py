"""Synthetic scenes and prior generators used for training and checks."""

import logging
from pathlib import Path

import numpy as np

from .imageio import write_pgm, write_ppm

log = logging.getLogger(__name__)

LATTICE = 8


def voronoi_map(rng, size, num_classes, lattice=LATTICE):
    """Label map from nearest-seed assignment on a coarse ``lattice x lattice`` grid.

    Every class owns one seed cell, so all classes are present whenever
    ``num_classes <= lattice**2``. Cells are upsampled to ``size x size``.
    """
    if num_classes > lattice * lattice:
        raise ValueError(f"{num_classes} classes do not fit a {lattice}x{lattice} lattice")
    cells = rng.choice(lattice * lattice, size=num_classes, replace=False)
    sy, sx = np.divmod(cells, lattice)
    yy, xx = np.mgrid[0:lattice, 0:lattice]
    dist = (yy[..., None] - sy) ** 2 + (xx[..., None] - sx) ** 2 + rng.random(num_classes) * 0.5
    coarse = np.argmin(dist, axis=-1)
    edges = np.linspace(0, size, lattice + 1).astype(int)
    rows = np.searchsorted(edges, np.arange(size), side="right") - 1
    return coarse[rows][:, rows]


def textured_scene(rng, labels, num_classes, noise=0.04):
    """RGB image (3, H, W): per-region base colour plus a coloured stripe texture and noise."""
    h, w = labels.shape
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = rng.uniform(0.15, 0.85, size=(num_classes, 3))
    tint = rng.uniform(-1.0, 1.0, size=(num_classes, 3))
    amp = rng.uniform(0.02, 0.12, size=num_classes)
    freq = rng.uniform(4.0, 24.0, size=num_classes)
    angle = rng.uniform(0.0, np.pi, size=num_classes)
    phase = np.cos(angle)[labels] * xx + np.sin(angle)[labels] * yy
    stripes = np.sin(2 * np.pi * freq[labels] * phase) * amp[labels]
    img = base[labels].transpose(2, 0, 1) + tint[labels].transpose(2, 0, 1) * stripes
    img += rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def make_scene(rng, size, num_classes):
    labels = voronoi_map(rng, size, num_classes)
    return textured_scene(rng, labels, num_classes), labels


def write_dataset(out, count, size=256, num_classes=19, seed=0):
    """Write ``scene_XXXX.ppm`` / ``scene_XXXX.pgm`` pairs; returns their stems."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    stems = []
    for i in range(count):
        image, labels = make_scene(rng, size, num_classes)
        stem = out / f"scene_{i:04d}"
        write_ppm(stem.with_suffix(".ppm"), image)
        write_pgm(stem.with_suffix(".pgm"), labels)
        stems.append(stem)
    log.info("wrote %d scenes to %s", count, out)
    return stems


def correlated_priors(rng, count, channels, factors=4, snr=10.0, scale=0.03, mixing=None):
    """``count`` prior vectors (count, channels) = low-rank signal + white noise.

    Each channel's signal has standard deviation ``scale`` and its noise
    variance is ``scale**2 / snr``. Pass ``mixing`` to share one
    (channels, factors) matrix across calls.
    """
    if mixing is None:
        mixing = rng.normal(size=(channels, factors))
    mixing = mixing / np.linalg.norm(mixing, axis=1, keepdims=True)
    signal = rng.normal(size=(count, factors)) @ mixing.T * scale
    noise = rng.normal(size=(count, channels)) * scale / np.sqrt(snr)
    return signal + noise


def independent_priors(rng, count, channels, scale=0.03):
    return rng.normal(size=(count, channels)) * scale
