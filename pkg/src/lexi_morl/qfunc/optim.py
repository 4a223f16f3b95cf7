"""RMSProp over a list of parameter arrays."""
from __future__ import annotations

import numpy as np


class RmsProp:
    """``v <- rho*v + (1-rho)*g^2``;  ``theta <- theta - lr*g/(sqrt(v)+eps)``."""

    def __init__(self, params, lr: float, rho: float = 0.95, eps: float = 1e-6):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        self.params = params
        self.lr, self.rho, self.eps = float(lr), float(rho), float(eps)
        self.sq = [np.zeros_like(p) for p in params]
        self.steps = 0

    def step(self, grads):
        for p, v, g in zip(self.params, self.sq, grads):
            v *= self.rho
            v += (1.0 - self.rho) * g * g
            p -= self.lr * g / (np.sqrt(v) + self.eps)
        self.steps += 1

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {f"sq{i}": v for i, v in enumerate(self.sq)}

    def load_state(self, arrays: dict[str, np.ndarray], steps: int = 0):
        for i, v in enumerate(self.sq):
            v[...] = arrays[f"sq{i}"]
        self.steps = steps
