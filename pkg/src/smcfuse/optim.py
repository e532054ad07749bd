"""Adam with bias correction and the piecewise-cosine halving schedule."""

from __future__ import annotations

import math

import numpy as np

from .numerics import Parameter


def learning_rate(iteration: int, base: float = 2e-4, window: int = 1000) -> float:
    """Cosine decay from the window's start rate to half of it, once per ``window`` iterations.

    Continuous at window boundaries, so ``lr(k * window) = base / 2**k`` exactly.
    """
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    k, r = divmod(iteration, window)
    start = base * 0.5 ** k
    return start * (0.75 + 0.25 * math.cos(math.pi * r / window))


class Adam:
    def __init__(self, params: list[Parameter], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            g = p.grad
            m = self.m[p.name] = self.beta1 * self.m[p.name] + (1.0 - self.beta1) * g
            v = self.v[p.name] = self.beta2 * self.v[p.name] + (1.0 - self.beta2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {f"adam_m/{k}": v for k, v in self.m.items()}
        out.update({f"adam_v/{k}": v for k, v in self.v.items()})
        return out

    def load_state(self, state: dict[str, np.ndarray], t: int) -> None:
        for name in self.m:
            self.m[name] = state[f"adam_m/{name}"].copy()
            self.v[name] = state[f"adam_v/{name}"].copy()
        self.t = t


def adam_step(params: list[Parameter], optimizer: Adam, lr: float) -> None:
    """Apply one update using the gradients currently held by ``params``."""
    if [p.name for p in params] != [p.name for p in optimizer.params]:
        raise ValueError("optimizer state does not match the parameter list")
    optimizer.step(lr)
