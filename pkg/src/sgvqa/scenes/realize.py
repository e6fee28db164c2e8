"""Noisy scene-graph realization: the frozen stand-in for a pretrained
scene-graph generator. Holds no trainable parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import stream
from .spec import CATEGORIES, COLORS, PREDICATES, SIZES, SceneSpec

__all__ = ["RealizeNoise", "GraphNode", "GraphEdge", "SceneGraph", "GraphRealizer"]


@dataclass
class RealizeNoise:
    feature_sigma: float = 0.1
    edge_temperature: float = 0.2
    edge_logit_sigma: float = 0.5

    def validate(self) -> None:
        if self.feature_sigma < 0:
            raise ValueError("feature_sigma must be >= 0")
        if self.edge_temperature <= 0:
            raise ValueError("edge_temperature must be > 0")
        if self.edge_logit_sigma < 0:
            raise ValueError("edge_logit_sigma must be >= 0")


@dataclass
class GraphNode:
    oid: int                # object id; loss alignment only, never a model input
    features: np.ndarray
    category: int


@dataclass
class GraphEdge:
    src: int                # node index within this graph's (randomized) order
    dst: int
    scores: np.ndarray      # distribution over the predicate vocabulary


@dataclass
class SceneGraph:
    nodes: list[GraphNode]
    edges: list[GraphEdge]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def feature_matrix(self) -> np.ndarray:
        return np.stack([n.features for n in self.nodes])

    def index_of(self, oid: int) -> int:
        for i, n in enumerate(self.nodes):
            if n.oid == oid:
                return i
        raise KeyError(oid)


def _row_softmax(m: np.ndarray) -> np.ndarray:
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class GraphRealizer:
    """Maps a SceneSpec to a noisy SceneGraph via a fixed random projection.

    The projection is keyed by the corpus seed, so every realization in one
    corpus shares the same frozen encoder. Node order is randomized per call,
    which forces downstream consumers to handle permutations honestly.
    """

    def __init__(self, corpus_seed: int, node_dim: int):
        if node_dim < 4:
            raise ValueError("node_dim must be at least 4")
        self.node_dim = node_dim
        in_dim = len(CATEGORIES) + len(COLORS) + len(SIZES) + 3
        prng = stream(corpus_seed, "realizer.projection")
        # last two feature dims carry centered positions directly; the rest is
        # a dense random mix of the full attribute/position encoding
        self.projection = prng.normal(size=(node_dim - 2, in_dim)) / np.sqrt(in_dim)

    def _encode(self, obj) -> np.ndarray:
        return self._encode_all([obj])[0]

    def _encode_all(self, objects) -> np.ndarray:
        n_cat, n_col = len(CATEGORIES), len(COLORS)
        e = np.zeros((len(objects), n_cat + n_col + len(SIZES) + 3))
        for i, obj in enumerate(objects):
            e[i, obj.category] = 1.0
            e[i, n_cat + obj.color] = 1.0
            e[i, n_cat + n_col + obj.size] = 1.0
            e[i, -3:] = (obj.x, obj.y, 1.0)
        feats = np.empty((len(objects), self.node_dim))
        feats[:, :-2] = e @ self.projection.T
        feats[:, -2] = [2.0 * (o.x - 0.5) for o in objects]
        feats[:, -1] = [2.0 * (o.y - 0.5) for o in objects]
        return feats

    def realize(self, spec: SceneSpec, noise: RealizeNoise, rng: np.random.Generator) -> SceneGraph:
        noise.validate()
        n = len(spec.objects)
        order = rng.permutation(n)
        shuffled = [spec.objects[i] for i in order]
        feats = self._encode_all(shuffled)
        feats += noise.feature_sigma * rng.normal(0.0, 1.0, size=(n, self.node_dim))
        nodes = [
            GraphNode(oid=obj.oid, features=feats[i], category=obj.category)
            for i, obj in enumerate(shuffled)
        ]
        node_index = {obj.oid: i for i, obj in enumerate(shuffled)}
        k = len(PREDICATES)
        logits = np.zeros((len(spec.relations), k))
        for i, rel in enumerate(spec.relations):
            logits[i, rel.pred] = 1.0
        logits /= noise.edge_temperature
        logits += noise.edge_logit_sigma * rng.normal(size=logits.shape)
        scores = _row_softmax(logits) if len(spec.relations) else logits
        edges = [
            GraphEdge(src=node_index[rel.subj], dst=node_index[rel.obj], scores=scores[i])
            for i, rel in enumerate(spec.relations)
        ]
        return SceneGraph(nodes=nodes, edges=edges)
