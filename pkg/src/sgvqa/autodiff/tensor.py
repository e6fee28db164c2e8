"""Tape-based reverse-mode autodiff over dense float64 tensors.

The primitive set is deliberately small: just enough to express cosine
similarity losses, graph attention, and the MLP heads. Ops record onto the
innermost active :class:`Tape`; with no tape active (or under ``no_grad``)
they are plain numpy forwards and skip building backward closures entirely.
Gradients accumulate into ``Tensor.grad`` until explicitly cleared.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Tape", "no_grad", "backward", "detach", "detach_freeze",
    "apply_primitive", "add", "sub", "mul", "matmul", "concat", "tsum",
    "tmean", "tmax", "softmax", "log", "exp", "relu", "elu", "leaky_relu",
    "l2_normalize", "dropout", "reshape", "transpose", "slice_rows",
]

NORM_FLOOR = 1e-12

_STATE = threading.local()


def _stack() -> list:
    st = getattr(_STATE, "stack", None)
    if st is None:
        st = _STATE.stack = []
    return st


def _active() -> "Tape | None":
    st = _stack()
    return st[-1] if st else None


class Tape:
    """Ordered record of differentiable steps, confined to one thread.

    Records are appended in forward order, so reverse iteration is a valid
    topological order for backpropagation.
    """

    __slots__ = ("records",)

    def __init__(self) -> None:
        # each record: (backward_fn, inputs, output)
        self.records: list[tuple[Callable, tuple["Tensor", ...], "Tensor"]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _stack().pop()
        assert popped is self, "tapes must be exited in LIFO order"

    def __len__(self) -> int:
        return len(self.records)


class no_grad:
    """Context in which ops do not record, regardless of requires_grad."""

    def __enter__(self) -> None:
        _stack().append(None)

    def __exit__(self, *exc) -> None:
        _stack().pop()


class extended_precision:
    """Run forwards in extended (long double) precision.

    Used by the gradient checker's numeric phase: central differences at
    eps=1e-5 on float64 forwards bottom out at ~1 ULP of the loss, which is
    too coarse to certify structurally tiny gradient coordinates. Constants
    created inside the context are upcast exactly.
    """

    def __enter__(self) -> None:
        _STATE.dtype = np.longdouble

    def __exit__(self, *exc) -> None:
        _STATE.dtype = np.float64


def active_dtype():
    return getattr(_STATE, "dtype", np.float64)


class Tensor:
    """Dense n-d float64 value with an optional accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=active_dtype())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return _wrap(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; scalars are lifted to constant tensors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __neg__(self):
        return mul(self, _NEG_ONE)


def _wrap(arr: np.ndarray) -> Tensor:
    """Fast constructor for arrays already known to be float64 ndarrays."""
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = False
    t.grad = None
    t.name = None
    return t


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_NEG_ONE = Tensor(-1.0)


def _record(out: Tensor, inputs: tuple, backward_fn: Callable) -> None:
    out.requires_grad = True
    _stack()[-1].records.append((backward_fn, inputs, out))


def _tracing(*tensors: Tensor) -> bool:
    st = _stack()
    if not st or st[-1] is None:
        return False
    for t in tensors:
        if t.requires_grad:
            return True
    return False


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, inverting numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class detach_freeze:
    """Record-then-replay the values passing through detach().

    Finite-differencing a stop-gradient loss must hold the detached targets
    at their base-point values (the defining property of stop-gradient is
    that the derivative ignores that branch). The gradient checker records
    every detach output during the analytic pass, then replays the stored
    values during perturbed evaluations. Call order must be deterministic.
    """

    def __init__(self) -> None:
        self.values: list[np.ndarray] = []
        self._mode: str | None = None
        self._cursor = 0

    class _Scope:
        def __init__(self, owner: "detach_freeze", mode: str):
            self.owner = owner
            self.mode = mode

        def __enter__(self):
            owner = self.owner
            owner._mode = self.mode
            owner._cursor = 0
            if self.mode == "record":
                owner.values.clear()
            _STATE.freeze = owner
            return owner

        def __exit__(self, *exc):
            _STATE.freeze = None
            self.owner._mode = None

    def recording(self) -> "_Scope":
        return self._Scope(self, "record")

    def replaying(self) -> "_Scope":
        return self._Scope(self, "replay")

    def intercept(self, data: np.ndarray) -> np.ndarray:
        if self._mode == "record":
            self.values.append(data)
            return data
        if self._cursor >= len(self.values):
            raise RuntimeError("detach_freeze: more detach() calls than recorded")
        out = self.values[self._cursor]
        self._cursor += 1
        return out


def detach(t: Tensor) -> Tensor:
    """Stop-gradient: same values, no tape linkage."""
    freeze = getattr(_STATE, "freeze", None)
    if freeze is not None:
        return _wrap(freeze.intercept(t.data))
    return _wrap(t.data)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = _wrap(a.data + b.data)
    if _tracing(a, b):
        ash, bsh = a.data.shape, b.data.shape

        def bwd(g):
            return _unbroadcast(g, ash), _unbroadcast(g, bsh)

        _record(out, (a, b), bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _wrap(a.data - b.data)
    if _tracing(a, b):
        ash, bsh = a.data.shape, b.data.shape

        def bwd(g):
            return _unbroadcast(g, ash), _unbroadcast(-g, bsh)

        _record(out, (a, b), bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    out = _wrap(ad * bd)
    if _tracing(a, b):

        def bwd(g):
            return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

        _record(out, (a, b), bwd)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.ndim > 2 or bd.ndim > 2:
        raise ValueError(f"matmul supports 1-d/2-d operands, got {ad.shape} @ {bd.shape}")
    out = _wrap(ad @ bd)
    if _tracing(a, b):

        def bwd(g):
            if ad.ndim == 2 and bd.ndim == 2:
                return g @ bd.T, ad.T @ g
            if ad.ndim == 1 and bd.ndim == 2:
                return bd @ g, np.outer(ad, g)
            if ad.ndim == 2 and bd.ndim == 1:
                return np.outer(g, bd), ad.T @ g
            return g * bd, g * ad  # 1-d @ 1-d

        _record(out, (a, b), bwd)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = tuple(tensors)
    if not ts:
        raise ValueError("concat of empty sequence")
    out = _wrap(np.concatenate([t.data for t in ts], axis=axis))
    if _tracing(*ts):
        splits = np.cumsum([t.data.shape[axis] for t in ts])[:-1]

        def bwd(g):
            return tuple(np.split(g, splits, axis=axis))

        _record(out, ts, bwd)
    return out


def tsum(t: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = _wrap(t.data.sum(axis=axis, keepdims=keepdims))
    if _tracing(t):
        shape = t.data.shape

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        _record(out, (t,), bwd)
    return out


def tmean(t: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    shape = t.data.shape
    n = t.data.size if axis is None else shape[axis]
    if n == 0:
        raise ValueError("mean over empty axis")
    out = _wrap(t.data.mean(axis=axis, keepdims=keepdims))
    if _tracing(t):
        inv = 1.0 / n

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g * inv, shape).copy(),)

        _record(out, (t,), bwd)
    return out


def tmax(t: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Max reduction; gradient routes to the first maximal entry (lowest index)."""
    d = t.data
    if d.size == 0:
        raise ValueError("max over empty tensor")
    out = _wrap(d.max(axis=axis, keepdims=keepdims))
    if _tracing(t):

        def bwd(g):
            mask = np.zeros_like(d)
            if axis is None:
                mask.flat[int(d.argmax())] = 1.0
                return (mask * g,)
            idx = np.expand_dims(d.argmax(axis=axis), axis)
            np.put_along_axis(mask, idx, 1.0, axis=axis)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (mask * g,)

        _record(out, (t,), bwd)
    return out


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    d = t.data
    if d.shape[axis] == 0:
        raise ValueError("softmax over empty axis")
    e = np.exp(d - d.max(axis=axis, keepdims=True))
    res = e / e.sum(axis=axis, keepdims=True)
    out = _wrap(res)
    if _tracing(t):

        def bwd(g):
            return ((g - (g * res).sum(axis=axis, keepdims=True)) * res,)

        _record(out, (t,), bwd)
    return out


def log(t: Tensor) -> Tensor:
    d = t.data
    if np.any(d <= 0.0):
        raise ValueError("log requires strictly positive input")
    out = _wrap(np.log(d))
    if _tracing(t):

        def bwd(g):
            return (g / d,)

        _record(out, (t,), bwd)
    return out


def exp(t: Tensor) -> Tensor:
    res = np.exp(t.data)
    out = _wrap(res)
    if _tracing(t):

        def bwd(g):
            return (g * res,)

        _record(out, (t,), bwd)
    return out


def relu(t: Tensor) -> Tensor:
    d = t.data
    out = _wrap(np.maximum(d, 0.0))
    if _tracing(t):

        def bwd(g):
            return (g * (d > 0.0),)

        _record(out, (t,), bwd)
    return out


def elu(t: Tensor, alpha: float = 1.0) -> Tensor:
    d = t.data
    neg = alpha * np.expm1(np.minimum(d, 0.0))
    out = _wrap(np.where(d > 0.0, d, neg))
    if _tracing(t):

        def bwd(g):
            return (g * np.where(d > 0.0, 1.0, neg + alpha),)

        _record(out, (t,), bwd)
    return out


def leaky_relu(t: Tensor, slope: float = 0.2) -> Tensor:
    d = t.data
    out = _wrap(np.where(d > 0.0, d, slope * d))
    if _tracing(t):

        def bwd(g):
            return (g * np.where(d > 0.0, 1.0, slope),)

        _record(out, (t,), bwd)
    return out


def l2_normalize(t: Tensor, axis: int = -1) -> Tensor:
    d = t.data
    norms = np.sqrt((d * d).sum(axis=axis, keepdims=True))
    if np.any(norms < NORM_FLOOR):
        raise ValueError(f"l2_normalize: vector norm below floor {NORM_FLOOR}")
    res = d / norms
    out = _wrap(res)
    if _tracing(t):

        def bwd(g):
            return ((g - res * (g * res).sum(axis=axis, keepdims=True)) / norms,)

        _record(out, (t,), bwd)
    return out


def dropout(t: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return t
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit rng stream")
    mask = (rng.random(t.data.shape) >= rate) / (1.0 - rate)
    out = _wrap(t.data * mask)
    if _tracing(t):

        def bwd(g):
            return (g * mask,)

        _record(out, (t,), bwd)
    return out


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _wrap(t.data.reshape(shape))
    if _tracing(t):
        orig = t.data.shape

        def bwd(g):
            return (g.reshape(orig),)

        _record(out, (t,), bwd)
    return out


def transpose(t: Tensor) -> Tensor:
    if t.data.ndim != 2:
        raise ValueError("transpose expects a 2-d tensor")
    out = _wrap(np.ascontiguousarray(t.data.T))
    if _tracing(t):

        def bwd(g):
            return (np.ascontiguousarray(g.T),)

        _record(out, (t,), bwd)
    return out


def slice_rows(t: Tensor, start: int, stop: int) -> Tensor:
    d = t.data
    if not 0 <= start < stop <= d.shape[0]:
        raise ValueError(f"invalid row slice [{start}:{stop}] for shape {d.shape}")
    out = _wrap(d[start:stop])
    if _tracing(t):

        def bwd(g):
            full = np.zeros_like(d)
            full[start:stop] = g
            return (full,)

        _record(out, (t,), bwd)
    return out


# ---------------------------------------------------------------------------
# generic dispatch + backward
# ---------------------------------------------------------------------------

_PRIMITIVES: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "matmul": matmul,
    "concat": lambda *ts, axis=0: concat(ts, axis=axis),
    "sum": tsum,
    "mean": tmean,
    "max": tmax,
    "softmax": softmax,
    "log": log,
    "exp": exp,
    "relu": relu,
    "elu": elu,
    "leaky_relu": leaky_relu,
    "l2_normalize": l2_normalize,
    "dropout": dropout,
    "reshape": reshape,
    "transpose": transpose,
    "slice_rows": slice_rows,
}


def apply_primitive(kind: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
    """Dispatch a primitive by name (the uniform entry point used by tooling)."""
    fn = _PRIMITIVES.get(kind)
    if fn is None:
        raise ValueError(f"unknown primitive kind {kind!r}")
    return fn(*inputs, **attrs)


def backward(loss: Tensor, tape: Tape) -> dict[int, Tensor]:
    """Backpropagate d(loss)/d(t) through the tape.

    Contributions are *accumulated* into each reached tensor's ``grad``;
    tensors not reachable from the loss are untouched (grad stays None,
    i.e. exactly zero). Returns the reached tensors keyed by ``id``.

    Within one call a scratch map keeps this pass's gradients separate, so
    repeated calls accumulate cleanly. Gradient buffers are never mutated in
    place; callers may hold references to ``.grad`` safely.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    reached: dict[int, Tensor] = {id(loss): loss}
    grads_pop = grads.pop
    grads_get = grads.get

    for bwd_fn, inputs, out in reversed(tape.records):
        og = grads_pop(id(out), None)
        if og is None:
            continue
        out.grad = og if out.grad is None else out.grad + og
        for t, g in zip(inputs, bwd_fn(og)):
            if g is None or not t.requires_grad:
                continue
            tid = id(t)
            prev = grads_get(tid)
            grads[tid] = g if prev is None else prev + g
            reached[tid] = t

    for tid, g in grads.items():  # leaves (and loss if it is a leaf)
        t = reached[tid]
        t.grad = g if t.grad is None else t.grad + g
    return reached
