"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 lr_scale: dict[str, float] | None = None):
        """lr_scale maps parameter-name prefixes to learning-rate
        multipliers, e.g. {"policy.": 20.0} to train a small head faster
        than the backbone."""
        self.params = params
        self.lr = lr
        self.lr_scale = lr_scale or {}
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None):
        """One update using accumulated .grad fields; skips gradless params."""
        lr = self.lr if lr is None else lr
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            mhat = self.m[k] / b1t
            vhat = self.v[k] / b2t
            plr = lr
            for prefix, scale in self.lr_scale.items():
                if k.startswith(prefix):
                    plr = lr * scale
            p.data = p.data - plr * mhat / (np.sqrt(vhat) + self.eps)
