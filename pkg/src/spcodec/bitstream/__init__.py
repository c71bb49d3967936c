"""Container and model-file serialization."""

from .container import CodedImage, pack, unpack
from .modelfile import dumps, load_model, loads, save_model

__all__ = ["CodedImage", "dumps", "load_model", "loads", "pack", "save_model", "unpack"]
