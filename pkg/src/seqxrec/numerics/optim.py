"""Adam optimizer over named parameter tables."""

from __future__ import annotations

import numpy as np

from .. import kernels


class Adam:
    """Classic Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        # params: dict name -> Tensor (insertion order fixes update order)
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            kernels.adam_step(
                p.data.reshape(-1),
                np.ascontiguousarray(p.grad.reshape(-1)),
                self._m[name].reshape(-1),
                self._v[name].reshape(-1),
                self.t,
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                self.weight_decay,
            )

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()
