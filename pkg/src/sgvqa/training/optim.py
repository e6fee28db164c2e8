"""Adam with decoupled weight decay, plus the step-decay schedule."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor

__all__ = ["Adam", "lr_at_epoch"]


def lr_at_epoch(base_lr: float, decay_factor: float, period: int, epoch: int) -> float:
    """Effective learning rate for 0-indexed epoch: base * factor^(epoch // period)."""
    if period < 1:
        raise ValueError("decay period must be >= 1")
    return base_lr * decay_factor ** (epoch // period)


class Adam:
    """Adam with decoupled weight decay.

    Parameters whose grad is None (never reached by backward) are skipped
    entirely, decay included: a branch that is absent from the loss must not
    move its weights.
    """

    def __init__(
        self,
        named_params: list[tuple[str, Tensor]],
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.named_params = named_params
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.named_params:
            g = p.grad
            if g is None:
                continue
            m = self._m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            v = self._v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self._m[name] = m
            self._v[name] = v
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - lr * update - lr * self.weight_decay * p.data
