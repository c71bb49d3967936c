"""Central finite-difference gradient checking."""

from dataclasses import dataclass

import numpy as np

from .optim import forward_backward


@dataclass
class Probe:
    name: str
    index: tuple
    analytic: float
    numeric: float

    @property
    def rel_error(self):
        scale = max(abs(self.analytic), abs(self.numeric), 1e-6)
        return abs(self.analytic - self.numeric) / scale


def check_gradients(graph_eval, params, inputs=None, probes=10, h=1e-3, rng=None, names=None):
    """Compare analytic gradients with central differences at random coordinates.

    ``probes`` coordinates are drawn uniformly over all entries of the tracked
    parameters. Returns the list of :class:`Probe` results.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    names = list(params.params) if names is None else list(names)
    _, grads = forward_backward(graph_eval, params, inputs, names=names)
    sizes = np.array([params.params[n].size for n in names])
    flat = rng.choice(sizes.sum(), size=min(probes, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    results = []
    for k in flat:
        j = int(np.searchsorted(offsets, k, side="right") - 1)
        name = names[j]
        arr = params.params[name]
        index = np.unravel_index(int(k - offsets[j]), arr.shape)
        saved = arr[index]
        arr[index] = saved + h
        up, _ = forward_backward(graph_eval, params, inputs, names=())
        arr[index] = saved - h
        down, _ = forward_backward(graph_eval, params, inputs, names=())
        arr[index] = saved
        results.append(Probe(name, tuple(int(i) for i in index), float(grads[name][index]), (up - down) / (2 * h)))
    return results
