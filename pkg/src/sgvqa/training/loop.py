"""Siamese dual-view training loop.

Per item: the anchor scene and an augmented view are realized as noisy
graphs, both encoded by the *same* parameter tensors, and the configured
similarity loss couples them with stop-gradient on the target side. The
supervised term reads the anchor view's logits only. Predictor heads run
batched across the whole minibatch (both views share batch-norm statistics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import Tape, Tensor, backward, concat, matmul, reshape, slice_rows
from ..losses import DualViewItem, LossConfig, total_loss
from ..model import (
    ModelParams, PRESETS, classify, edge_scores, embed_tokens, encode_graph,
    encode_question, predict_head,
)
from ..rng import stream
from ..scenes import (
    ANSWERS, AugmentError, Corpus, GraphRealizer, QAItem, TOKENS, augment_scene,
)
from .evaluate import MetricsReport, evaluate
from .optim import Adam, lr_at_epoch

__all__ = ["TrainConfig", "TrainResult", "DivergenceError", "train",
           "build_dual_view_items", "subsampled_train_items"]

DEFAULT_EPOCHS = {"desk": 15, "paper": 50}
# the small desk model underfits at the full-scale rate within 15 epochs
DEFAULT_LR = {"desk": 1e-3, "paper": 1e-4}


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss."""


@dataclass
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    preset: str = "desk"
    learning_rate: float | None = None  # preset default: desk 1e-3, paper 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int | None = None           # preset default: desk 15, paper 50
    lr_decay_factor: float = 0.1
    lr_decay_period: int = 20
    seed: int = 0
    data_fraction: float = 1.0
    augmentations: tuple[str, ...] = ("flip", "attribute_jitter", "noise_crop")
    jitter_frac: float = 0.3
    crop_sigma: float = 0.05

    def resolved_epochs(self) -> int:
        return self.epochs if self.epochs is not None else DEFAULT_EPOCHS[self.preset]

    def resolved_learning_rate(self) -> float:
        return self.learning_rate if self.learning_rate is not None else DEFAULT_LR[self.preset]

    def validate(self) -> None:
        self.loss.validate()
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if (self.resolved_learning_rate() <= 0 or self.batch_size < 1
                or self.resolved_epochs() < 1):
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not 0.0 < self.data_fraction <= 1.0:
            raise ValueError("data_fraction must be in (0, 1]")
        if self.lr_decay_period < 1:
            raise ValueError("lr_decay_period must be >= 1")
        bad = [a for a in self.augmentations if a not in
               ("identity", "flip", "attribute_jitter", "noise_crop")]
        if bad:
            raise ValueError(f"unknown augmentations: {bad}")
        if not self.augmentations:
            raise ValueError("at least one augmentation kind is required")


@dataclass
class TrainResult:
    params: ModelParams
    metrics: list[dict]
    loss_rows: list[dict]
    final_report: MetricsReport


def subsampled_train_items(corpus: Corpus, seed: int, fraction: float) -> list[QAItem]:
    """Scene-level nested subsample: smaller fractions are subsets of larger.

    The priority order over scenes depends only on the seed, and kept items
    stay in corpus order, so fraction 1.0 is exactly the full split.
    """
    items = corpus.splits["train"]
    if fraction >= 1.0:
        return list(items)
    scene_ids = sorted({i.scene_id for i in items})
    order = stream(seed, "train.fraction").permutation(len(scene_ids))
    n_keep = math.ceil(fraction * len(scene_ids))
    if n_keep < 1 or not items:
        raise ValueError(f"fraction {fraction} leaves no training data")
    keep = {scene_ids[j] for j in order[:n_keep]}
    return [i for i in items if i.scene_id in keep]


def _augmented_spec(spec, cfg: TrainConfig, ccfg, rng):
    kind = cfg.augmentations[int(rng.integers(len(cfg.augmentations)))]
    for _ in range(4):
        try:
            return augment_scene(
                spec, kind, rng,
                near_margin=ccfg.near_margin, link_radius=ccfg.link_radius,
                jitter_frac=cfg.jitter_frac, crop_sigma=cfg.crop_sigma,
            )
        except AugmentError:
            continue  # rare: crop removed too much; redraw from the same stream
    return spec


def _gather_rows(z: Tensor, indices: list[int]) -> Tensor:
    sel = np.zeros((len(indices), z.data.shape[0]))
    sel[np.arange(len(indices)), indices] = 1.0
    return matmul(Tensor(sel), z)


def _aligned_edge_pairs(g1, g2) -> tuple[list, list] | None:
    by_oid1 = {(g1.nodes[e.src].oid, g1.nodes[e.dst].oid): (e.src, e.dst) for e in g1.edges}
    by_oid2 = {(g2.nodes[e.src].oid, g2.nodes[e.dst].oid): (e.src, e.dst) for e in g2.edges}
    shared = sorted(set(by_oid1) & set(by_oid2))
    if not shared:
        return None
    return [by_oid1[p] for p in shared], [by_oid2[p] for p in shared]


def build_dual_view_items(
    params: ModelParams,
    corpus: Corpus,
    realizer: GraphRealizer,
    qa_items: list[QAItem],
    cfg: TrainConfig,
    epoch: int,
) -> list[DualViewItem]:
    """Forward one minibatch under the active tape; returns per-item views.

    Branches not demanded by the loss config (classifier when alpha=0, the
    whole augmented pathway for the baseline) are never built, so their
    parameters stay off the tape entirely.
    """
    lcfg = cfg.loss
    ccfg = corpus.config
    use_sim = lcfg.variant != "baseline" and lcfg.beta != 0.0
    use_sup = lcfg.alpha != 0.0

    items: list[DualViewItem] = []
    pred_rows_1: list[Tensor] = []  # per-item tensors destined for the predictor
    pred_rows_2: list[Tensor] = []
    for qa in qa_items:
        spec = corpus.scenes[qa.scene_id]
        instr = encode_question(params, embed_tokens(params, qa.question))
        g1 = realizer.realize(
            spec, ccfg.noise, stream(cfg.seed, "train.realize", (epoch, qa.item_id, 0))
        )
        z1, gv1 = encode_graph(params, g1, instr)
        logits = None
        if use_sup:
            logits = classify(
                params, gv1, instr.question,
                rng=stream(cfg.seed, "train.dropout", (epoch, qa.item_id)),
            )
        item = DualViewItem(answer=qa.answer, logits=logits)
        if use_sim:
            spec2 = _augmented_spec(
                spec, cfg, ccfg, stream(cfg.seed, "train.augment", (epoch, qa.item_id))
            )
            g2 = realizer.realize(
                spec2, ccfg.noise, stream(cfg.seed, "train.realize", (epoch, qa.item_id, 1))
            )
            z2, gv2 = encode_graph(params, g2, instr)
            if lcfg.variant == "global":
                item.g1, item.g2 = gv1, gv2
                pred_rows_1.append(reshape(gv1, (1, params.dims.graph)))
                pred_rows_2.append(reshape(gv2, (1, params.dims.graph)))
            elif lcfg.variant == "local":
                item.z1, item.z2 = z1, z2
                pred_rows_1.append(z1)
                pred_rows_2.append(z2)
            else:  # selfsim: object-id-aligned rows, anchor first
                shared = sorted({n.oid for n in g1.nodes} & {n.oid for n in g2.nodes})
                z1a = _gather_rows(z1, [g1.index_of(o) for o in shared])
                z2a = _gather_rows(z2, [g2.index_of(o) for o in shared])
                item.z1, item.z2 = z1a, z2a
                pred_rows_1.append(z1a)
                pred_rows_2.append(z2a)
            if lcfg.link_reg:
                aligned = _aligned_edge_pairs(g1, g2)
                if aligned is not None:
                    item.r1 = edge_scores(params, z1, aligned[0])
                    item.r2 = edge_scores(params, z2, aligned[1])
        items.append(item)

    if use_sim:
        if lcfg.use_predictor:
            role = "graph" if lcfg.variant == "global" else "node"
            stacked = concat(pred_rows_1 + pred_rows_2, axis=0)
            pred = predict_head(params, stacked, role)
            offset = 0
            outs = []
            for block in pred_rows_1 + pred_rows_2:
                n = block.data.shape[0]
                outs.append(slice_rows(pred, offset, offset + n))
                offset += n
            n_items = len(items)
            for i, item in enumerate(items):
                p1, p2 = outs[i], outs[n_items + i]
                if lcfg.variant == "global":
                    p1 = reshape(p1, (params.dims.graph,))
                    p2 = reshape(p2, (params.dims.graph,))
                item.p1, item.p2 = p1, p2
        else:
            # deliberately broken configuration: raw representations stand in
            # for predictor outputs (collapse study)
            for i, item in enumerate(items):
                if lcfg.variant == "global":
                    item.p1, item.p2 = item.g1, item.g2
                else:
                    item.p1, item.p2 = item.z1, item.z2
    return items


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def train(
    cfg: TrainConfig,
    corpus: Corpus,
    out_dir: str | Path | None = None,
    save_every_epoch: bool = True,
) -> TrainResult:
    """Optimize on the train split; evaluate on val after every epoch.

    Deterministic given (cfg, corpus): every random draw comes from a stream
    keyed by purpose and indices, not from shared mutable state. Raises
    DivergenceError on a non-finite loss.
    """
    cfg.validate()
    if corpus.config.node_dim != PRESETS[cfg.preset].node:
        raise ValueError(
            f"corpus node_dim {corpus.config.node_dim} does not match preset "
            f"{cfg.preset!r} node dim {PRESETS[cfg.preset].node}"
        )
    params = ModelParams(
        cfg.preset, seed=cfg.seed,
        n_tokens=len(TOKENS), n_answers=len(ANSWERS),
    )
    realizer = GraphRealizer(corpus.seed, corpus.config.node_dim)
    optimizer = Adam(params.trainable(), weight_decay=cfg.weight_decay)
    train_items = subsampled_train_items(corpus, cfg.seed, cfg.data_fraction)
    if not train_items:
        raise ValueError("empty training split")
    epochs = cfg.resolved_epochs()
    ckpt_dir = None
    if out_dir is not None:
        ckpt_dir = Path(out_dir) / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    def metrics_row(epoch: int, report: MetricsReport, losses: dict) -> dict:
        row = {"epoch": epoch, "split": report.split}
        row.update(report.rates())
        row.update({"L_sup": losses.get("L_sup", 0.0),
                    "L_prime": losses.get("L_prime", 0.0),
                    "J_e": losses.get("J_e", 0.0),
                    "repr_std": report.repr_std})
        return row

    metrics: list[dict] = [metrics_row(0, evaluate(params, corpus, "val"), {})]
    loss_rows: list[dict] = []
    step = 0
    for epoch in range(epochs):
        params.set_mode("train")
        lr = lr_at_epoch(cfg.resolved_learning_rate(), cfg.lr_decay_factor,
                         cfg.lr_decay_period, epoch)
        order = stream(cfg.seed, "train.shuffle", epoch).permutation(len(train_items))
        sums = {"L_sup": 0.0, "L_prime": 0.0, "J_e": 0.0, "total": 0.0}
        n_steps = 0
        for batch_idx in _batches(order, cfg.batch_size):
            batch = [train_items[i] for i in batch_idx.tolist()]
            params.zero_grads()
            with Tape() as tape:
                dv_items = build_dual_view_items(params, corpus, realizer, batch, cfg, epoch)
                loss, parts = total_loss(cfg.loss, dv_items)
            if not np.isfinite(loss.data):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch + 1} step {step}: {parts}"
                )
            backward(loss, tape)
            optimizer.step(lr)
            step += 1
            n_steps += 1
            loss_rows.append({"step": step, "L_sup": parts.l_sup, "L_prime": parts.l_prime,
                              "J_e": parts.j_e, "total": parts.total})
            for key, val in (("L_sup", parts.l_sup), ("L_prime", parts.l_prime),
                             ("J_e", parts.j_e), ("total", parts.total)):
                sums[key] += val
        epoch_losses = {k: v / n_steps for k, v in sums.items()}
        report = evaluate(params, corpus, "val")
        metrics.append(metrics_row(epoch + 1, report, epoch_losses))
        if ckpt_dir is not None and save_every_epoch:
            params.save(ckpt_dir / f"epoch_{epoch + 1:03d}.json",
                        extra={"epoch": epoch + 1, "lr": lr})
    if ckpt_dir is not None:
        params.save(ckpt_dir / "final.json", extra={"epoch": epochs})
    return TrainResult(params=params, metrics=metrics, loss_rows=loss_rows,
                       final_report=evaluate(params, corpus, "val"))
