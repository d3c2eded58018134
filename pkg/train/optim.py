"""
Optimizers and learning-rate schedules.

An optimizer updates parameters by replacing their `data` arrays, never
writing into them, so arrays captured by a previous forward pass stay
valid.
"""

import math
from typing import Dict, Iterable

import numpy as np

from tensor.real import RealTensor
from utils.exceptions import ConfigError


class Optimizer:
    """Base class: holds the named parameters it updates."""

    def __init__(self, params: Dict[str, RealTensor]):
        self.params = params
        self.steps = 0

    def step(self, lr: float) -> None:
        self.steps += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            update = self._update(name, p.grad.astype(np.float64))
            p.data = (p.data - lr * update).astype(p.data.dtype)

    def _update(self, name: str, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Adam(Optimizer):
    def __init__(self, params: Dict[str, RealTensor], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        super().__init__(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def _update(self, name: str, grad: np.ndarray) -> np.ndarray:
        m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * grad
        v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * grad * grad
        self.m[name], self.v[name] = m, v
        m_hat = m / (1 - self.beta1 ** self.steps)
        v_hat = v / (1 - self.beta2 ** self.steps)
        return m_hat / (np.sqrt(v_hat) + self.eps)


class SGDMomentum(Optimizer):
    def __init__(self, params: Dict[str, RealTensor], momentum: float = 0.9):
        super().__init__(params)
        self.momentum = momentum
        self.velocity: Dict[str, np.ndarray] = {}

    def _update(self, name: str, grad: np.ndarray) -> np.ndarray:
        velocity = self.momentum * self.velocity.get(name, 0.0) + grad
        self.velocity[name] = velocity
        return velocity


def make_optimizer(kind: str, params: Dict[str, RealTensor]) -> Optimizer:
    if kind == "adam":
        return Adam(params)
    if kind == "sgd-momentum":
        return SGDMomentum(params)
    raise ConfigError(f"Unknown optimizer {kind!r}", key="train.optimizer")


def learning_rate(base: float, schedule: str, step: int, total_steps: int) -> float:
    """Rate for a 0-based step; cosine decays from `base` to 0 over total_steps."""
    if schedule == "constant" or total_steps <= 1:
        return base
    return 0.5 * base * (1.0 + math.cos(math.pi * step / total_steps))


def clip_latent_weights(params: Iterable[RealTensor], bound: float) -> None:
    """Clip latent binary weights to [-bound, bound] so the STE band stays active."""
    for p in params:
        p.data = np.clip(p.data, -bound, bound)
