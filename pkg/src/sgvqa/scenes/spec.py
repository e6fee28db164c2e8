"""Latent synthetic worlds: object layouts with position-derived relations.

A scene is a small set of attributed objects in the unit square. Relations
are a pure function of positions (re-derived after every augmentation), so
stored relation sets are always exactly recomputable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "CATEGORIES", "COLORS", "SIZES", "PREDICATES", "PRED_INVERSE",
    "SceneObject", "Relation", "SceneSpec", "PlacementError", "AugmentError",
    "predicate_between", "derive_relations", "sample_scene", "augment_scene",
    "AUGMENT_KINDS",
]

CATEGORIES = ["ball", "book", "box", "car", "cat", "chair", "cup", "dog", "lamp", "tree"]
COLORS = ["black", "blue", "green", "red", "white", "yellow"]
SIZES = ["small", "medium", "large"]
PREDICATES = ["left-of", "right-of", "above", "below", "near"]

PRED_INVERSE = {
    "left-of": "right-of",
    "right-of": "left-of",
    "above": "below",
    "below": "above",
    "near": "near",
}

AUGMENT_KINDS = ("identity", "flip", "attribute_jitter", "noise_crop")


class PlacementError(RuntimeError):
    """Could not place objects at the required pairwise distance."""


class AugmentError(RuntimeError):
    """Augmentation produced an invalid scene (e.g. too few objects left)."""


@dataclass(frozen=True)
class SceneObject:
    oid: int
    category: int
    color: int
    size: int
    x: float
    y: float


@dataclass(frozen=True)
class Relation:
    subj: int
    pred: int
    obj: int


@dataclass
class SceneSpec:
    scene_id: int
    objects: list[SceneObject]
    relations: list[Relation]

    def object_by_id(self, oid: int) -> SceneObject:
        for o in self.objects:
            if o.oid == oid:
                return o
        raise KeyError(oid)

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "objects": [
                {"id": o.oid, "category": o.category, "color": o.color,
                 "size": o.size, "x": o.x, "y": o.y}
                for o in self.objects
            ],
            "relations": [{"subj": r.subj, "pred": r.pred, "obj": r.obj} for r in self.relations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        objects = [
            SceneObject(o["id"], o["category"], o["color"], o["size"], o["x"], o["y"])
            for o in d["objects"]
        ]
        relations = [Relation(r["subj"], r["pred"], r["obj"]) for r in d["relations"]]
        return cls(d["scene_id"], objects, relations)


def predicate_between(s: SceneObject, o: SceneObject, near_margin: float) -> int:
    """Salient predicate for the ordered pair (s, o); total on positions.

    The dominant displacement axis wins; y points up, so `above` means the
    subject sits higher than the object. Mirroring x swaps left-of/right-of
    and leaves the other predicates unchanged.
    """
    dx = o.x - s.x
    dy = o.y - s.y
    if max(abs(dx), abs(dy)) <= near_margin:
        return PREDICATES.index("near")
    if abs(dx) >= abs(dy):
        return PREDICATES.index("left-of" if dx > 0 else "right-of")
    return PREDICATES.index("below" if dy > 0 else "above")


def _linked_pairs(objects: list[SceneObject], link_radius: float) -> list[tuple[int, int]]:
    """Unordered object-index pairs that carry an edge.

    A pair is linked when it is within `link_radius` or one is the other's
    nearest neighbor (so no object is ever isolated).
    """
    n = len(objects)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(objects[i].x - objects[j].x, objects[i].y - objects[j].y)
            dist[i, j] = dist[j, i] = d
    np.fill_diagonal(dist, np.inf)
    nearest = dist.argmin(axis=1)
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if dist[i, j] <= link_radius or nearest[i] == j or nearest[j] == i:
                pairs.append((i, j))
    return pairs


def derive_relations(
    objects: list[SceneObject], near_margin: float, link_radius: float
) -> list[Relation]:
    """Directed relation set, a deterministic function of positions."""
    rels = []
    for i, j in _linked_pairs(objects, link_radius):
        u, v = objects[i], objects[j]
        rels.append(Relation(u.oid, predicate_between(u, v, near_margin), v.oid))
        rels.append(Relation(v.oid, predicate_between(v, u, near_margin), u.oid))
    return rels


def sample_scene(rng: np.random.Generator, cfg) -> SceneSpec:
    """Draw a scene: uniform positions with pairwise separation, random attrs.

    Raises PlacementError when the separation constraint cannot be met within
    a bounded number of retries (never silently reduces the object count).
    """
    n = int(rng.integers(2, cfg.max_objects, endpoint=True))
    positions: list[tuple[float, float]] = []
    for _ in range(n):
        for _attempt in range(200):
            x, y = rng.uniform(0.0, 1.0, size=2)
            if all(math.hypot(x - px, y - py) >= cfg.min_object_distance for px, py in positions):
                positions.append((float(x), float(y)))
                break
        else:
            raise PlacementError(
                f"could not place {n} objects at min distance {cfg.min_object_distance}"
            )
    objects = [
        SceneObject(
            oid=i,
            category=int(rng.integers(len(CATEGORIES))),
            color=int(rng.integers(len(COLORS))),
            size=int(rng.integers(len(SIZES))),
            x=positions[i][0],
            y=positions[i][1],
        )
        for i in range(n)
    ]
    relations = derive_relations(objects, cfg.near_margin, cfg.link_radius)
    return SceneSpec(scene_id=-1, objects=objects, relations=relations)


def augment_scene(
    spec: SceneSpec,
    kind: str,
    rng: np.random.Generator,
    *,
    near_margin: float = 0.15,
    link_radius: float = 0.45,
    jitter_frac: float = 0.3,
    crop_sigma: float = 0.05,
) -> SceneSpec:
    """Apply one view transform; object ids survive so views stay alignable."""
    if kind == "identity":
        return spec
    if kind == "flip":
        objects = [replace(o, x=1.0 - o.x) for o in spec.objects]
    elif kind == "attribute_jitter":
        n_jitter = math.ceil(jitter_frac * len(spec.objects))
        chosen = set(rng.choice(len(spec.objects), size=n_jitter, replace=False).tolist())
        objects = [
            replace(o, color=int(rng.integers(len(COLORS)))) if i in chosen else o
            for i, o in enumerate(spec.objects)
        ]
    elif kind == "noise_crop":
        deltas = rng.normal(0.0, crop_sigma, size=(len(spec.objects), 2))
        objects = []
        for o, (dx, dy) in zip(spec.objects, deltas):
            x, y = o.x + dx, o.y + dy
            if 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0:
                objects.append(replace(o, x=float(x), y=float(y)))
        if len(objects) < 2:
            raise AugmentError("noise_crop dropped too many boundary objects")
    else:
        raise ValueError(f"unknown augmentation kind {kind!r}")
    return SceneSpec(
        scene_id=spec.scene_id,
        objects=objects,
        relations=derive_relations(objects, near_margin, link_radius),
    )
