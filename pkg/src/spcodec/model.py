"""Codec configuration and parameter initialization."""

from dataclasses import asdict, dataclass

import numpy as np

from . import entropy_models as em
from .errors import CodecError
from .numerics import ParamStore
from .semantic_prior import init_synnet, init_texnet


@dataclass(frozen=True)
class CodecConfig:
    channels: int = 64
    num_classes: int = 19
    delta: float = 0.01
    hidden: int = 32
    use_coords: bool = True

    def __post_init__(self):
        em.hyper_widths(self.channels)
        if not 1 <= self.num_classes <= 255:
            raise CodecError(f"num_classes must be in [1, 255], got {self.num_classes}")
        if not self.delta > 0:
            raise CodecError(f"delta must be positive, got {self.delta}")

    @property
    def quantizer(self):
        return em.Quantizer(self.delta)

    @property
    def hyper_channels(self):
        return self.channels // em.CHANNEL_REDUCTION

    def to_dict(self):
        return asdict(self)


def init_params(config, seed=0, factorized_prior=False):
    """Fresh parameters for every network of the codec.

    With ``factorized_prior`` the store also holds a ``density.t`` model that
    codes the prior channel-wise (the no-hyperprior ablation).
    """
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init_texnet(store, rng, config.channels, config.hidden)
    init_synnet(store, rng, config.channels, config.hidden)
    em.init_hyper(store, rng, config.channels)
    em.init_density(store, rng, "density.z", config.hyper_channels)
    if factorized_prior:
        em.init_density(store, rng, "density.t", config.channels)
    return store


def expected_shapes(config, factorized_prior=False):
    return {name: value.shape for name, value in init_params(config, 0, factorized_prior).params.items()}
