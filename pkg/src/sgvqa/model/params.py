"""Trainable parameter container, dimension presets, checkpoint round-trip.

Checkpoints are a versioned JSON container with base64-encoded float64
buffers, so save/load is bitwise value-preserving and the files are
deterministic bytes for identical contents.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import NormState, Tensor
from ..rng import stream
from ..scenes import PREDICATES, TOKENS

__all__ = ["ModelDims", "PRESETS", "ModelParams", "CheckpointError", "NUM_GAT_STEPS"]

# number of instruction-conditioned graph encoder steps
NUM_GAT_STEPS = 5

CHECKPOINT_VERSION = 1

CLF_DROPOUT = 0.2


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelDims:
    word: int
    question: int
    node: int
    link: int
    graph: int
    n_answers: int


PRESETS = {
    "desk": ModelDims(word=32, question=32, node=32, link=32, graph=64, n_answers=32),
    "paper": ModelDims(word=300, question=300, node=300, link=300, graph=512, n_answers=1878),
}


def _spec_for(dims: ModelDims, n_tokens: int, n_predicates: int,
              n_answers: int) -> list[tuple[str, tuple[int, ...], int]]:
    """(name, shape, fan_in) for every weight tensor, in a fixed order.

    Bias vectors carry fan_in 0, which means zero initialization. The
    per-step graph weights are stored as the node/instruction blocks of one
    conceptual [state ; instruction] matrix, so both share its fan_in.
    """
    w, q, n, l, g = dims.word, dims.question, dims.node, dims.link, dims.graph
    spec: list[tuple[str, tuple[int, ...], int]] = [
        ("embed.table", (n_tokens, w), w),
        ("qenc.Wq", (w, q), w),
        ("qenc.Wk", (w, q), w),
        ("qenc.Wv", (w, q), w),
        ("qenc.Ws", (w, q), w),
        ("qenc.dec.Wa", (q, q), q),
        ("qenc.dec.Wd", (2 * q, q), 2 * q),
        ("qenc.dec.bd", (q,), 0),
    ]
    for t in range(NUM_GAT_STEPS):
        spec += [
            (f"gat.{t}.W_node", (n, n), n + q),
            (f"gat.{t}.W_instr", (q, n), n + q),
            (f"gat.{t}.a1", (n, 1), n),
            (f"gat.{t}.a2", (n, 1), n),
        ]
    spec += [
        ("pool.W", (n, g), n),
        ("pool.b", (g,), 0),
        ("edge.W1", (2 * n, l), 2 * n),
        ("edge.b1", (l,), 0),
        ("edge.W2", (l, n_predicates), l),
        ("edge.b2", (n_predicates,), 0),
    ]
    for head, d in (("pred_node", n), ("pred_graph", g)):
        spec += [
            (f"{head}.fc1.W", (d, d), d),
            (f"{head}.fc2.W", (d, d), d),
            (f"{head}.fc3.W", (d, d), d),
            (f"{head}.fc3.b", (d,), 0),
        ]
    spec += [
        ("clf.W1", (g + q, g), g + q),
        ("clf.b1", (g,), 0),
        ("clf.W2", (g, n_answers), g),
        ("clf.b2", (n_answers,), 0),
    ]
    return spec


class ModelParams:
    """All trainable weights plus batch-norm running states.

    Both views of a scene are encoded by the *same* tensor objects here;
    weight sharing is identity, not copies.
    """

    def __init__(
        self,
        preset: str = "desk",
        seed: int = 0,
        n_tokens: int | None = None,
        n_predicates: int | None = None,
        n_answers: int | None = None,
        dims: ModelDims | None = None,
    ):
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        self.preset = preset
        self.seed = seed
        self.dims = dims if dims is not None else PRESETS[preset]
        self.n_tokens = n_tokens if n_tokens is not None else len(TOKENS)
        self.n_predicates = n_predicates if n_predicates is not None else len(PREDICATES)
        self.n_answers = n_answers if n_answers is not None else self.dims.n_answers
        self.num_steps = NUM_GAT_STEPS
        self.clf_dropout = CLF_DROPOUT
        self.mode = "train"

        self.tensors: dict[str, Tensor] = {}
        for name, shape, fan_in in _spec_for(self.dims, self.n_tokens,
                                             self.n_predicates, self.n_answers):
            if fan_in == 0:
                data = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(fan_in)
                data = stream(seed, f"init.{name}").uniform(-bound, bound, size=shape)
            self.tensors[name] = Tensor(data, requires_grad=True, name=name)
        # batch-norm affine params start at identity (gamma=1, beta=0)
        self.norm_states: dict[str, NormState] = {}
        for head, d in (("pred_node", self.dims.node), ("pred_graph", self.dims.graph)):
            for k in (1, 2):
                g = Tensor(np.ones(d), requires_grad=True, name=f"{head}.bn{k}.gamma")
                b = Tensor(np.zeros(d), requires_grad=True, name=f"{head}.bn{k}.beta")
                self.tensors[f"{head}.bn{k}.gamma"] = g
                self.tensors[f"{head}.bn{k}.beta"] = b
                self.norm_states[f"{head}.bn{k}"] = NormState.create(d)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def set_mode(self, mode: str) -> None:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be train or eval, got {mode!r}")
        self.mode = mode
        for state in self.norm_states.values():
            state.mode = mode

    def trainable(self) -> list[tuple[str, Tensor]]:
        return list(self.tensors.items())

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def all_finite(self) -> bool:
        return all(np.isfinite(t.data).all() for t in self.tensors.values())

    # -- checkpoint io ------------------------------------------------------

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "preset": self.preset,
            "seed": self.seed,
            "dims": list(
                (self.dims.word, self.dims.question, self.dims.node,
                 self.dims.link, self.dims.graph, self.dims.n_answers)
            ),
            "n_tokens": self.n_tokens,
            "n_predicates": self.n_predicates,
            "n_answers": self.n_answers,
            "mode": self.mode,
            "params": {
                name: {
                    "shape": list(t.data.shape),
                    "data": base64.b64encode(np.ascontiguousarray(t.data).tobytes()).decode(),
                }
                for name, t in self.tensors.items()
            },
            "norm_states": {
                name: {
                    "running_mean": base64.b64encode(s.running_mean.tobytes()).decode(),
                    "running_var": base64.b64encode(s.running_var.tobytes()).decode(),
                    "momentum": s.momentum,
                }
                for name, s in self.norm_states.items()
            },
            "extra": extra or {},
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> tuple["ModelParams", dict]:
        try:
            payload = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise CheckpointError(f"no checkpoint at {path}") from None
        except json.JSONDecodeError as e:
            raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None
        if payload.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
        params = cls(
            preset=payload["preset"],
            seed=payload["seed"],
            n_tokens=payload["n_tokens"],
            n_predicates=payload["n_predicates"],
            n_answers=payload["n_answers"],
            dims=ModelDims(*payload["dims"]),
        )
        for name, entry in payload["params"].items():
            if name not in params.tensors:
                raise CheckpointError(f"unexpected parameter {name!r} in checkpoint")
            data = np.frombuffer(base64.b64decode(entry["data"]), dtype=np.float64)
            params.tensors[name].data = data.reshape(entry["shape"]).copy()
        for name, entry in payload["norm_states"].items():
            state = params.norm_states[name]
            state.running_mean = np.frombuffer(
                base64.b64decode(entry["running_mean"]), dtype=np.float64).copy()
            state.running_var = np.frombuffer(
                base64.b64decode(entry["running_var"]), dtype=np.float64).copy()
            state.momentum = entry["momentum"]
        params.set_mode(payload["mode"])
        return params, payload.get("extra", {})
