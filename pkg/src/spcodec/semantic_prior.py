"""Semantic-wise prior extraction and synthesis.

A feature extractor maps the image to a C x H x W field; averaging it over
each semantic region gives one C-vector per class (the semantic prior). The
synthesizer broadcasts decoded vectors back over their regions, appends two
normalized coordinate channels and mixes channels per pixel down to RGB.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CodecError, ShapeError
from .numerics import tensor as T

MIN_IMAGE_SIDE = 8


@dataclass
class SemanticMap:
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 2 or min(self.labels.shape) < 1:
            raise ShapeError("SemanticMap", f"labels must be a non-empty 2-D array, got {self.labels.shape}")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise CodecError(f"labels must lie in [0, {self.num_classes})")

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    def presence(self):
        return np.bincount(self.labels.reshape(-1), minlength=self.num_classes) > 0


@dataclass
class SemanticPrior:
    vectors: np.ndarray
    presence: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.presence = np.asarray(self.presence, dtype=bool)
        if self.vectors.ndim != 2 or self.presence.shape != (self.vectors.shape[1],):
            raise ShapeError("SemanticPrior", f"vectors {self.vectors.shape} vs presence {self.presence.shape}")

    @property
    def channels(self):
        return self.vectors.shape[0]

    @property
    def num_classes(self):
        return self.vectors.shape[1]


def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init_texnet(store, rng, channels, hidden=32):
    store.add("texnet.conv1.w", _he(rng, (hidden, 3, 3, 3), 27))
    store.add("texnet.conv1.b", np.zeros(hidden))
    store.add("texnet.conv2.w", _he(rng, (channels, hidden, 3, 3), 9 * hidden))
    store.add("texnet.conv2.b", np.zeros(channels))


def init_synnet(store, rng, channels, hidden=32):
    store.add("synnet.mix1.w", _he(rng, (hidden, channels + 2), channels + 2))
    store.add("synnet.mix1.b", np.zeros(hidden))
    store.add("synnet.mix2.w", _he(rng, (3, hidden), hidden) * 0.1)
    store.add("synnet.mix2.b", np.full(3, 0.5))


def texnet(image, P):
    """Two reflect-padded 3x3 convolutions with a ReLU between them."""
    h = T.relu(T.conv3x3(image, P["texnet.conv1.w"], P["texnet.conv1.b"]))
    return T.conv3x3(h, P["texnet.conv2.w"], P["texnet.conv2.b"])


def coordinate_channels(height, width):
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy, xx])


def synnet(broadcast, P, use_coords=True):
    """Per-pixel channel mixing of broadcast priors (+ coordinates) to RGB."""
    _, h, w = broadcast.shape
    coords = coordinate_channels(h, w) if use_coords else np.zeros((2, h, w))
    x = T.concat([broadcast, coords], axis=0)
    x = T.relu(T.channel_mix(x, P["synnet.mix1.w"], P["synnet.mix1.b"]))
    return T.channel_mix(x, P["synnet.mix2.w"], P["synnet.mix2.b"])


def _check_image(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError("extract_features", f"expected a (3, H, W) image, got {image.shape}")
    if min(image.shape[1:]) < MIN_IMAGE_SIDE:
        raise ShapeError("extract_features", f"image {image.shape[2]}x{image.shape[1]} is smaller than 8x8")
    return image


def extract_features(image, params):
    """Feature map (C, H, W) of an RGB image (3, H, W) in [0, 1]."""
    return texnet(_check_image(image), params.params).data


def pool_prior(features, smap):
    """Average each feature channel over every semantic region."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[1:] != smap.labels.shape:
        raise ShapeError("pool_prior", f"features {features.shape} vs map {smap.labels.shape}")
    vectors = T.segment_mean(features, smap.labels, smap.num_classes).data
    return SemanticPrior(vectors, smap.presence())


def broadcast_prior(prior, smap):
    """Feature map in which every pixel of class n carries ``prior.vectors[:, n]``."""
    if prior.num_classes != smap.num_classes:
        raise ShapeError("broadcast_prior", f"prior has {prior.num_classes} classes, map has {smap.num_classes}")
    return prior.vectors[:, smap.labels]


def synthesize(prior, smap, params, use_coords=True):
    """Decode an RGB image (3, H, W) clamped to [0, 1]."""
    expected = params["synnet.mix1.w"].shape[1] - 2
    if prior.channels != expected:
        raise ShapeError("synthesize", f"prior has {prior.channels} channels, synthesizer expects {expected}")
    out = synnet(broadcast_prior(prior, smap), params.params, use_coords).data
    return np.clip(out, 0.0, 1.0)


def swap_region_prior(prior, reference, class_id):
    """Copy of ``prior`` whose column ``class_id`` comes from ``reference``."""
    if prior.vectors.shape != reference.vectors.shape:
        raise ShapeError("swap_region_prior", f"{prior.vectors.shape} vs {reference.vectors.shape}")
    if not 0 <= class_id < prior.num_classes:
        raise CodecError(f"class {class_id} outside [0, {prior.num_classes})")
    if not reference.presence[class_id]:
        raise CodecError(f"class {class_id} is absent from the reference prior")
    vectors = prior.vectors.copy()
    vectors[:, class_id] = reference.vectors[:, class_id]
    presence = prior.presence.copy()
    presence[class_id] = True
    return SemanticPrior(vectors, presence)
