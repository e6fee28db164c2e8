"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward, detach_freeze, extended_precision, no_grad

__all__ = ["GradCheckRecord", "finite_diff_check", "max_rel_err"]


@dataclass
class GradCheckRecord:
    param_name: str
    max_rel_err: float
    eps: float

    def to_dict(self) -> dict:
        return {"param_name": self.param_name, "max_rel_err": self.max_rel_err, "eps": self.eps}


def _eval_scalar(fn: Callable[[], Tensor]):
    with no_grad():
        val = fn().data.reshape(())
    if not np.isfinite(val):
        raise ValueError("finite_diff_check: fn returned a non-finite value")
    return val


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
) -> list[GradCheckRecord]:
    """Compare backward() gradients of ``fn()`` against central differences.

    ``fn`` must be a deterministic scalar function of the current values of
    ``params`` (re-create any rng streams inside it so masks repeat). Existing
    grad accumulators on the params are cleared before and after the check.

    Stop-gradient targets are held at their base-point values during the
    perturbed evaluations (detach outputs are recorded on the analytic pass
    and replayed), because the derivative being verified is the one that
    treats detached branches as constants. The perturbed forwards run in
    extended precision so the difference quotient is not limited by float64
    evaluation roundoff.

    The relative error per coordinate uses denominator
    ``max(|analytic|, |numeric|, 1e-8)``; each record reports the max over
    coordinates of one parameter.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    for p in params:
        p.grad = None

    freezer = detach_freeze()
    with freezer.recording():
        with Tape() as tape:
            loss = fn()
    if not np.isfinite(loss.data).all():
        raise ValueError("finite_diff_check: fn returned a non-finite value")
    backward(loss, tape)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None

    records = []
    originals = [p.data for p in params]
    eps_ld = np.longdouble(eps)
    try:
        for p in params:
            p.data = p.data.astype(np.longdouble)
        with extended_precision():
            for k, p in enumerate(params):
                numeric = np.zeros(p.data.shape)
                flat = p.data.ravel()
                num_flat = numeric.ravel()
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + eps_ld
                    with freezer.replaying():
                        f_plus = _eval_scalar(fn)
                    flat[i] = orig - eps_ld
                    with freezer.replaying():
                        f_minus = _eval_scalar(fn)
                    flat[i] = orig
                    num_flat[i] = float((f_plus - f_minus) / (2.0 * eps_ld))
                denom = np.maximum(np.maximum(np.abs(analytic[k]), np.abs(numeric)), 1e-8)
                err = float((np.abs(analytic[k] - numeric) / denom).max()) if p.data.size else 0.0
                name = p.name if p.name is not None else f"param_{k}"
                records.append(GradCheckRecord(name, err, eps))
    finally:
        for p, orig in zip(params, originals):
            p.data = orig
    return records


def max_rel_err(records: Sequence[GradCheckRecord]) -> float:
    return max((r.max_rel_err for r in records), default=0.0)
