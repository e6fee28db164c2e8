"""Evaluation: accuracy metrics, consistency/validity proxies, perturbation
probes, and the representation-spread statistic used to watch for collapse."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import no_grad
from ..model import ModelParams, classify, embed_tokens, encode_graph, encode_question
from ..rng import stream
from ..scenes import Corpus, GraphRealizer, QTYPES, SceneGraph, augment_scene
from ..scenes.realize import GraphEdge, GraphNode

__all__ = ["MetricsReport", "Perturbation", "evaluate", "aggregate_metrics",
           "TABLE_SETUPS", "PROBE_SETUPS"]


@dataclass(frozen=True)
class Perturbation:
    """Evaluation-time corruption; everything None means clean evaluation."""

    name: str = "identity"
    qtype: str | None = None           # restrict to one question type
    scene_augment: str | None = None   # flip | attribute_jitter | noise_crop
    jitter_frac: float = 1.0
    crop_sigma: float = 0.12
    feature_sigma: float | None = None  # graph feature noise, topology kept
    question_noise: float | None = None  # max fraction of tokens replaced


# Disruption study rows: question type matched with the augmentation that
# should specifically break it.
TABLE_SETUPS = [
    Perturbation(name="relation/flip", qtype="relation", scene_augment="flip"),
    Perturbation(name="attribute/strong_jitter", qtype="attribute",
                 scene_augment="attribute_jitter", jitter_frac=1.0),
    Perturbation(name="global/noise_crop", qtype="global",
                 scene_augment="noise_crop", crop_sigma=0.12),
]

# Bias probes: noise on the graph, the question, or both, full test set.
PROBE_SETUPS = [
    Perturbation(name="noise+sg", feature_sigma=0.5),
    Perturbation(name="question+noise", question_noise=0.5),
    Perturbation(name="noise+noise", feature_sigma=0.5, question_noise=0.5),
]


@dataclass
class MetricsReport:
    split: str
    overall: float
    binary: float
    open: float
    consistency: float
    validity: float
    per_qtype: dict[str, float]
    counts: dict[str, int]
    repr_std: float

    def rates(self) -> dict[str, float]:
        out = {
            "overall": self.overall, "binary": self.binary, "open": self.open,
            "consistency": self.consistency, "validity": self.validity,
        }
        out.update({f"acc_{q}": v for q, v in self.per_qtype.items()})
        return out

    def to_dict(self) -> dict:
        return {
            "split": self.split, "overall": self.overall, "binary": self.binary,
            "open": self.open, "consistency": self.consistency,
            "validity": self.validity, "per_qtype": dict(self.per_qtype),
            "counts": dict(self.counts), "repr_std": self.repr_std,
        }


def _perturbed_question(item, frac: float, n_tokens: int, seed: int) -> list[int]:
    rng = stream(seed, "probe.qnoise", item.item_id)
    out = list(item.question)
    for i in range(len(out)):
        if rng.random() < frac:
            out[i] = int(rng.integers(1, n_tokens))  # never the pad token
    return out


def _noisy_graph(graph: SceneGraph, sigma: float, seed: int, scene_id: int) -> SceneGraph:
    rng = stream(seed, "probe.featnoise", scene_id)
    nodes = [
        GraphNode(n.oid, n.features + sigma * rng.normal(size=n.features.shape), n.category)
        for n in graph.nodes
    ]
    edges = [GraphEdge(e.src, e.dst, e.scores) for e in graph.edges]
    return SceneGraph(nodes, edges)


def evaluate(
    params: ModelParams,
    corpus: Corpus,
    split: str,
    perturb: Perturbation | None = None,
) -> MetricsReport:
    """Score a split in eval mode; never mutates params or norm statistics.

    Predictions come from the anchor (unaugmented unless the perturbation says
    otherwise) graph realized with streams keyed by the corpus seed, so every
    model is scored on identical inputs.
    """
    if split not in corpus.splits:
        raise ValueError(f"unknown split {split!r}")
    if params.n_tokens < max(
        (max(i.question) + 1 for i in corpus.splits[split] if i.question), default=0
    ):
        raise ValueError("checkpoint vocabulary is smaller than the corpus vocabulary")
    perturb = perturb or Perturbation()
    items = corpus.splits[split]
    if perturb.qtype is not None:
        items = [i for i in items if i.qtype == perturb.qtype]
        if not items:
            raise ValueError(f"no items of qtype {perturb.qtype!r} in split {split!r}")

    prev_mode = params.mode
    params.set_mode("eval")
    realizer = GraphRealizer(corpus.seed, corpus.config.node_dim)
    ccfg = corpus.config
    graphs: dict[int, SceneGraph] = {}
    preds: list[int] = []
    gvecs: list[np.ndarray] = []

    with no_grad():
        for item in items:
            graph = graphs.get(item.scene_id)
            if graph is None:
                spec = corpus.scenes[item.scene_id]
                if perturb.scene_augment is not None:
                    spec = augment_scene(
                        spec, perturb.scene_augment,
                        stream(corpus.seed, "probe.augment", item.scene_id),
                        near_margin=ccfg.near_margin, link_radius=ccfg.link_radius,
                        jitter_frac=perturb.jitter_frac, crop_sigma=perturb.crop_sigma,
                    )
                graph = realizer.realize(
                    spec, ccfg.noise, stream(corpus.seed, "eval.realize", item.scene_id)
                )
                if perturb.feature_sigma is not None:
                    graph = _noisy_graph(graph, perturb.feature_sigma, corpus.seed, item.scene_id)
                graphs[item.scene_id] = graph
            question = item.question
            if perturb.question_noise is not None:
                question = _perturbed_question(item, perturb.question_noise,
                                               params.n_tokens, corpus.seed)
            instr = encode_question(params, embed_tokens(params, question))
            _, gvec = encode_graph(params, graph, instr)
            logits = classify(params, gvec, instr.question)
            preds.append(int(np.argmax(logits.data)))
            gvecs.append(gvec.data / np.linalg.norm(gvec.data))

    params.set_mode(prev_mode)
    return aggregate_metrics(split, items, preds, np.stack(gvecs))


def aggregate_metrics(
    split: str,
    items: list,
    preds: list[int],
    normalized_gvecs: np.ndarray,
) -> MetricsReport:
    """Fold per-item predictions into a MetricsReport.

    Overall accuracy is by construction the count-weighted mean of the binary
    and open accuracies; consistency is the fraction of multi-item paraphrase
    groups answered identically; validity the fraction of predictions inside
    each item's template answer set.
    """
    if len(items) != len(preds) or not items:
        raise ValueError("need one prediction per item")
    total = correct = 0
    n_binary = c_binary = n_open = c_open = 0
    n_valid_pred = 0
    per_q_total = {q: 0 for q in QTYPES}
    per_q_correct = {q: 0 for q in QTYPES}
    groups: dict[int, list[int]] = {}
    for item, pred in zip(items, preds):
        hit = pred == item.answer
        total += 1
        correct += hit
        if item.binary:
            n_binary += 1
            c_binary += hit
        else:
            n_open += 1
            c_open += hit
        per_q_total[item.qtype] += 1
        per_q_correct[item.qtype] += hit
        n_valid_pred += pred in item.valid_answers
        groups.setdefault(item.paraphrase_group, []).append(pred)
    multi = [g for g in groups.values() if len(g) >= 2]
    consistency = sum(len(set(g)) == 1 for g in multi) / len(multi) if multi else 1.0
    return MetricsReport(
        split=split,
        overall=correct / total,
        binary=c_binary / n_binary if n_binary else 0.0,
        open=c_open / n_open if n_open else 0.0,
        consistency=consistency,
        validity=n_valid_pred / total,
        per_qtype={
            q: (per_q_correct[q] / per_q_total[q] if per_q_total[q] else 0.0) for q in QTYPES
        },
        counts={"total": total, "binary": n_binary, "open": n_open,
                **{q: per_q_total[q] for q in QTYPES}},
        repr_std=float(np.std(normalized_gvecs, axis=0).mean()),
    )
