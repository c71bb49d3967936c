"""Semantic-prior conceptual image codec.

The codec splits an image into a losslessly coded semantic map (structure
layer) and a quantized per-region latent matrix (texture layer) coded with a
cross-channel hyperprior entropy model.
"""

__version__ = "0.1.0"
