"""Adam optimizer over a named parameter collection."""

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        # accepts a ParamSet or any name -> Tensor mapping
        self._params = list(params.items())
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in self._params}
        self._v = {name: np.zeros_like(t.data) for name, t in self._params}

    def zero_grad(self):
        for _, t in self._params:
            t.grad[...] = 0.0

    def step(self):
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self._t
        bias2 = 1.0 - b2**self._t
        for name, t in self._params:
            g = t.grad
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            t.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
