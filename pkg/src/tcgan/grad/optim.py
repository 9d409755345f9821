"""Adam optimizer over Parameter objects."""

import numpy as np

from .tensor import Parameter


class Adam:
    """Standard Adam with bias correction; frozen parameters are skipped
    and their values never change, whatever their gradient holds."""

    def __init__(self, params, lr=5e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = [p for p in params if isinstance(p, Parameter)]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p in self.params:
            if not p.trainable or p.grad is None:
                continue
            g = p.grad.data
            key = id(p)
            if key not in self._m:
                self._m[key] = np.zeros_like(p.data)
                self._v[key] = np.zeros_like(p.data)
            m = self._m[key]
            v = self._v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            mhat = m / bc1
            vhat = v / bc2
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(
                p.data.dtype
            )
