"""Batch normalization with train/eval running statistics.

Built compositionally from tape primitives (``1/sqrt(v)`` as
``exp(-0.5*log(v))``), so the backward pass comes from the engine itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, add, exp, log, mul, sub, tmean

__all__ = ["NormState", "batch_norm", "BN_EPS"]

BN_EPS = 1e-5


@dataclass
class NormState:
    """Per-feature running statistics; ``mode`` selects train vs eval."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    mode: str = "train"

    @classmethod
    def create(cls, n_features: int, momentum: float = 0.1) -> "NormState":
        return cls(
            running_mean=np.zeros(n_features),
            running_var=np.ones(n_features),
            momentum=momentum,
        )

    def validate(self) -> None:
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"momentum must be in (0,1), got {self.momentum}")
        if np.any(self.running_var <= 0.0):
            raise ValueError("running_var must stay strictly positive")
        if self.mode not in ("train", "eval"):
            raise ValueError(f"invalid mode {self.mode!r}")


def batch_norm(x: Tensor, state: NormState, gamma: Tensor, beta: Tensor) -> Tensor:
    """Normalize (batch, features) rows; affine transform by gamma/beta.

    Train mode uses batch statistics (variance floored by BN_EPS in the
    denominator, so constant columns are tolerated) and updates the running
    stats by ``(1-m)*old + m*batch``. Eval mode uses the stored running
    statistics and never mutates state. Train mode rejects batches of one
    row: a single sample has no usable batch statistics.
    """
    state.validate()
    if x.data.ndim != 2:
        raise ValueError(f"batch_norm expects (batch, features), got {x.shape}")
    if state.mode == "train":
        if x.data.shape[0] < 2:
            raise ValueError("batch_norm in train mode requires batch size >= 2")
        m = tmean(x, axis=0, keepdims=True)
        xc = sub(x, m)
        v = tmean(mul(xc, xc), axis=0, keepdims=True)
        inv_std = exp(mul(log(add(v, Tensor(BN_EPS))), Tensor(-0.5)))
        y = mul(xc, inv_std)
        mom = state.momentum
        state.running_mean = (1.0 - mom) * state.running_mean + mom * m.data.ravel()
        state.running_var = (1.0 - mom) * state.running_var + mom * v.data.ravel()
    else:
        inv = 1.0 / np.sqrt(state.running_var + BN_EPS)
        y = mul(sub(x, Tensor(state.running_mean)), Tensor(inv))
    return add(mul(y, gamma), beta)
