"""Adam with bias correction."""
from collections import OrderedDict

import numpy as np


class Adam:
    """Adam over a list of leaf tensors. Defaults: lr 0.001, betas (0.5, 0.999)."""

    def __init__(self, params, lr=0.001, betas=(0.5, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = (float(b) for b in betas)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self, prefix="adam."):
        out = OrderedDict()
        out[prefix + "hparams"] = np.array([self.lr, self.beta1, self.beta2, self.eps])
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}m.{i}"] = m.copy()
            out[f"{prefix}v.{i}"] = v.copy()
        return out

    def load_state_dict(self, state, step, prefix="adam."):
        self.lr, self.beta1, self.beta2, self.eps = (float(x) for x in state[prefix + "hparams"])
        for i in range(len(self.params)):
            self.m[i][...] = state[f"{prefix}m.{i}"]
            self.v[i][...] = state[f"{prefix}v.{i}"]
        self.step_count = int(step)
