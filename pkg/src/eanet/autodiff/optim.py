"""Adam optimizer with bias correction over a name -> Tensor parameter dict."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


class Adam:
    """Standard Adam. Updates parameter buffers in place.

    Parameters with a ``None`` gradient are treated as having a zero
    gradient, so a parameter untouched by the current graph still advances
    its moment decay consistently with the usual formulation.
    """

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        if not params:
            raise ShapeError("Adam needs at least one parameter")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self):
        """One update. The step count increases by exactly 1 per call."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self):
        """Moment buffers and counters for checkpointing, keyed for the archive."""
        out = {}
        for name in self.params:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, step_count):
        for name in self.params:
            m = arrays[f"adam.m.{name}"]
            v = arrays[f"adam.v.{name}"]
            if m.shape != self.m[name].shape or v.shape != self.v[name].shape:
                raise ShapeError(f"optimizer state shape mismatch for {name!r}")
            self.m[name] = m.astype(np.float64).copy()
            self.v[name] = v.astype(np.float64).copy()
        self.step_count = int(step_count)
