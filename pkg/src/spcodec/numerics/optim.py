"""Parameter storage, Adam and the forward/backward driver."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import CodecError, ShapeError
from .tensor import Tensor, backward


@dataclass
class ParamStore:
    """Named float64 parameters with Adam moment accumulators."""

    params: dict = field(default_factory=dict)
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def add(self, name, value):
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self, prefix=""):
        return [k for k in self.params if k.startswith(prefix)]

    def copy(self):
        return ParamStore(
            {k: a.copy() for k, a in self.params.items()},
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
            self.step,
        )

    def merge(self, other):
        for name, value in other.params.items():
            self.add(name, value)
        return self


def forward_backward(graph_eval, params, inputs=None, names=None):
    """Evaluate ``graph_eval(P, inputs)`` and differentiate it.

    ``P`` maps parameter names to leaf tensors. Returns ``(loss, grads)`` with
    one gradient array per parameter (zeros where the loss does not depend on
    it). ``names`` restricts which parameters are tracked.
    """
    names = list(params.params) if names is None else list(names)
    leaves = {}
    for name, value in params.params.items():
        leaves[name] = Tensor(value, requires_grad=name in names, op=f"param:{name}")
    loss = graph_eval(leaves, inputs)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ShapeError("forward_backward", "graph must produce a scalar tensor")
    loss = Tensor(loss.data.reshape(()), op=loss.op) if not loss.requires_grad else loss
    if loss.requires_grad:
        backward(loss)
    grads = {}
    for name in names:
        g = leaves[name].grad
        grads[name] = np.zeros_like(params.params[name]) if g is None else g.reshape(params.params[name].shape)
    return float(loss.data.reshape(())), grads


def adam_step(params, grads, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, names=None):
    """In-place bias-corrected Adam update of ``names`` (default: all parameters).

    Every updated parameter needs a gradient; returns ``params`` for chaining.
    """
    names = list(params.params) if names is None else list(names)
    for name in names:
        if name not in grads:
            raise CodecError(f"missing gradient for parameter {name!r}")
    for name in names:
        g = grads[name]
        if name not in params.params:
            raise CodecError(f"gradient for unknown parameter {name!r}")
        if g.shape != params.params[name].shape:
            raise ShapeError("adam_step", f"{name}: gradient {g.shape} vs parameter {params.params[name].shape}")
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name in names:
        g = grads[name]
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params

