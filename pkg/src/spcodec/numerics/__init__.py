"""Float64 tensors with reverse-mode gradients, Adam, and gradient checking."""

from .gradcheck import Probe, check_gradients
from .optim import ParamStore, adam_step, forward_backward
from .tensor import Tensor, backward

__all__ = ["ParamStore", "Probe", "Tensor", "adam_step", "backward", "check_gradients", "forward_backward"]
