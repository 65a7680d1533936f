"""First-order optimizers over a ParamStore."""

from __future__ import annotations

import numpy as np

from .tensor import ParamStore


class Adam:
    """Bias-corrected adaptive moment optimizer with standard defaults."""

    def __init__(self, params: ParamStore, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, t in self.params.items():
            g = grads[name]
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            t.data = t.data - self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class SGD:
    """Plain gradient descent; used by oracle tests that need exact steps."""

    def __init__(self, params: ParamStore, lr: float):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = float(lr)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            t.data = t.data - self.lr * grads[name]


def make_optimizer(kind: str, params: ParamStore, lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")
