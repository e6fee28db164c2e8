"""Scene sampling, augmentation, and realization tests."""

import math

import numpy as np
import pytest

from sgvqa.rng import stream
from sgvqa.scenes import (
    PREDICATES,
    AugmentError, CorpusConfig, GraphRealizer, RealizeNoise,
    SceneObject, SceneSpec, augment_scene, derive_relations, sample_scene,
)


def brute_force_relations(objects, near_margin, link_radius):
    """Independent O(n^2) re-derivation: pure-python, no shared helpers."""
    n = len(objects)
    nearest = {}
    for i in range(n):
        best, best_d = None, float("inf")
        for j in range(n):
            if i == j:
                continue
            d = math.hypot(objects[i].x - objects[j].x, objects[i].y - objects[j].y)
            if d < best_d:
                best, best_d = j, d
        nearest[i] = best
    out = set()
    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(objects[i].x - objects[j].x, objects[i].y - objects[j].y)
            if not (d <= link_radius or nearest[i] == j or nearest[j] == i):
                continue
            for s, o in ((objects[i], objects[j]), (objects[j], objects[i])):
                dx, dy = o.x - s.x, o.y - s.y
                if max(abs(dx), abs(dy)) <= near_margin:
                    p = "near"
                elif abs(dx) >= abs(dy):
                    p = "left-of" if dx > 0 else "right-of"
                else:
                    p = "below" if dy > 0 else "above"
                out.add((s.oid, PREDICATES.index(p), o.oid))
    return out


def two_object_scene(x1=0.2, x2=0.8, y=0.5):
    objects = [
        SceneObject(0, 0, 0, 0, x1, y),
        SceneObject(1, 1, 1, 1, x2, y),
    ]
    return SceneSpec(0, objects, derive_relations(objects, 0.15, 0.45))


class TestSampling:
    def test_deterministic_given_seed(self):
        cfg = CorpusConfig(max_objects=2)
        a = sample_scene(stream(3, "corpus.scene", 0), cfg)
        b = sample_scene(stream(3, "corpus.scene", 0), cfg)
        assert a.to_dict() == b.to_dict()

    def test_geometry_left_of(self):
        spec = two_object_scene()
        assert (0, PREDICATES.index("left-of"), 1) in {
            (r.subj, r.pred, r.obj) for r in spec.relations
        }

    def test_relations_match_brute_force(self):
        cfg = CorpusConfig()
        for i in range(30):
            spec = sample_scene(stream(10, "corpus.scene", i), cfg)
            got = {(r.subj, r.pred, r.obj) for r in spec.relations}
            want = brute_force_relations(spec.objects, cfg.near_margin, cfg.link_radius)
            assert got == want

    def test_pairwise_min_distance(self):
        cfg = CorpusConfig(min_object_distance=0.1)
        for i in range(20):
            spec = sample_scene(stream(11, "corpus.scene", i), cfg)
            for a in spec.objects:
                for b in spec.objects:
                    if a.oid < b.oid:
                        assert math.hypot(a.x - b.x, a.y - b.y) >= 0.1

    def test_impossible_placement_raises(self):
        from sgvqa.scenes import PlacementError
        cfg = CorpusConfig(max_objects=8, min_object_distance=0.9)
        with pytest.raises(PlacementError):
            for i in range(50):
                sample_scene(stream(12, "corpus.scene", i), cfg)

    def test_object_ids_unique_and_bounded(self):
        cfg = CorpusConfig()
        for i in range(10):
            spec = sample_scene(stream(13, "corpus.scene", i), cfg)
            ids = [o.oid for o in spec.objects]
            assert len(set(ids)) == len(ids)
            assert 2 <= len(ids) <= cfg.max_objects


class TestAugment:
    def test_identity(self):
        spec = two_object_scene()
        assert augment_scene(spec, "identity", stream(0, "aug")) is spec

    def test_flip_swaps_left_right(self):
        spec = two_object_scene()
        flipped = augment_scene(spec, "flip", stream(0, "aug"))
        rels = {(r.subj, r.pred, r.obj) for r in flipped.relations}
        assert (0, PREDICATES.index("right-of"), 1) in rels

    def test_flip_involution(self):
        cfg = CorpusConfig()
        for i in range(10):
            spec = sample_scene(stream(14, "corpus.scene", i), cfg)
            twice = augment_scene(
                augment_scene(spec, "flip", stream(0, "aug")), "flip", stream(0, "aug")
            )
            for a, b in zip(spec.objects, twice.objects):
                assert abs(a.x - b.x) < 1e-12 and a.y == b.y
            assert {(r.subj, r.pred, r.obj) for r in spec.relations} == {
                (r.subj, r.pred, r.obj) for r in twice.relations
            }

    def test_flip_preserves_above_below_and_near(self):
        cfg = CorpusConfig()
        for i in range(10):
            spec = sample_scene(stream(15, "corpus.scene", i), cfg)
            flipped = augment_scene(spec, "flip", stream(0, "aug"))
            lr = {PREDICATES.index("left-of"), PREDICATES.index("right-of")}
            orig = {(r.subj, r.obj): r.pred for r in spec.relations}
            for r in flipped.relations:
                before = orig[(r.subj, r.obj)]
                if before in lr:
                    assert r.pred in lr and r.pred != before
                else:
                    assert r.pred == before

    def test_attribute_jitter_touches_only_colors(self):
        cfg = CorpusConfig()
        spec = sample_scene(stream(16, "corpus.scene", 0), cfg)
        out = augment_scene(spec, "attribute_jitter", stream(1, "aug"), jitter_frac=1.0)
        for a, b in zip(spec.objects, out.objects):
            assert (a.x, a.y, a.category, a.size) == (b.x, b.y, b.category, b.size)

    def test_noise_crop_drops_boundary_objects(self):
        objects = [
            SceneObject(0, 0, 0, 0, 0.001, 0.5),
            SceneObject(1, 1, 1, 1, 0.45, 0.5),
            SceneObject(2, 2, 2, 2, 0.55, 0.5),
        ]
        spec = SceneSpec(0, objects, derive_relations(objects, 0.15, 0.45))
        out = augment_scene(spec, "noise_crop", stream(0, "aug"), crop_sigma=0.05)
        assert [o.oid for o in out.objects] == [1, 2]  # boundary object gone
        assert all(0 <= o.x <= 1 and 0 <= o.y <= 1 for o in out.objects)

    def test_noise_crop_below_two_objects_raises(self):
        spec = two_object_scene(0.0005, 0.9995)
        with pytest.raises(AugmentError):
            for i in range(200):
                augment_scene(spec, "noise_crop", stream(i, "aug"), crop_sigma=0.3)

    def test_augmented_relations_recomputable(self):
        cfg = CorpusConfig()
        for i in range(5):
            spec = sample_scene(stream(17, "corpus.scene", i), cfg)
            for kind in ("flip", "attribute_jitter", "noise_crop"):
                out = augment_scene(spec, kind, stream(i, "aug"))
                got = {(r.subj, r.pred, r.obj) for r in out.relations}
                want = brute_force_relations(out.objects, cfg.near_margin, cfg.link_radius)
                assert got == want


class TestRealize:
    def test_zero_noise_low_temperature_one_hot(self):
        spec = two_object_scene()
        realizer = GraphRealizer(corpus_seed=0, node_dim=16)
        noise = RealizeNoise(feature_sigma=0.0, edge_temperature=1e-6, edge_logit_sigma=0.0)
        graph = realizer.realize(spec, noise, stream(0, "realize"))
        rel_by_pair = {(r.subj, r.obj): r.pred for r in spec.relations}
        for e in graph.edges:
            pair = (graph.nodes[e.src].oid, graph.nodes[e.dst].oid)
            expected = np.zeros(len(PREDICATES))
            expected[rel_by_pair[pair]] = 1.0
            np.testing.assert_allclose(e.scores, expected, atol=1e-12)

    def test_determinism(self):
        spec = two_object_scene()
        realizer = GraphRealizer(0, 16)
        g1 = realizer.realize(spec, RealizeNoise(), stream(5, "realize"))
        g2 = realizer.realize(spec, RealizeNoise(), stream(5, "realize"))
        assert [n.oid for n in g1.nodes] == [n.oid for n in g2.nodes]
        np.testing.assert_array_equal(g1.feature_matrix(), g2.feature_matrix())
        for a, b in zip(g1.edges, g2.edges):
            assert (a.src, a.dst) == (b.src, b.dst)
            np.testing.assert_array_equal(a.scores, b.scores)

    def test_edge_distributions_sum_to_one_argmax_true(self):
        cfg = CorpusConfig()
        realizer = GraphRealizer(0, 32)
        noise = RealizeNoise(edge_temperature=0.05)
        for i in range(10):
            spec = sample_scene(stream(18, "corpus.scene", i), cfg)
            graph = realizer.realize(spec, noise, stream(i, "realize"))
            rel_by_pair = {(r.subj, r.obj): r.pred for r in spec.relations}
            for e in graph.edges:
                assert abs(e.scores.sum() - 1.0) < 1e-6
                pair = (graph.nodes[e.src].oid, graph.nodes[e.dst].oid)
                assert int(e.scores.argmax()) == rel_by_pair[pair]

    def test_feature_noise_distance_matches_chi_expectation(self):
        # E||f1 - f2|| for two draws differing only in N(0, sigma^2 I) noise:
        # sigma * sqrt(2) * E||N(0, I_d)||, with the exact chi mean via lgamma.
        dim, sigma, draws = 32, 0.25, 10_000
        spec = two_object_scene()
        realizer = GraphRealizer(0, dim)
        noise = RealizeNoise(feature_sigma=sigma)
        rng = stream(99, "realize.mc")
        dists = np.empty(draws)
        for t in range(draws):
            # same object encoding, two independent noise draws
            obj_feats = realizer._encode(spec.objects[0])
            n1 = obj_feats + sigma * rng.normal(size=dim)
            n2 = obj_feats + sigma * rng.normal(size=dim)
            dists[t] = np.linalg.norm(n1 - n2)
        chi_mean = math.sqrt(2) * math.exp(
            math.lgamma((dim + 1) / 2) - math.lgamma(dim / 2)
        )
        expected = sigma * math.sqrt(2) * chi_mean
        assert abs(dists.mean() - expected) / expected < 0.05

    def test_node_dim_respected(self):
        realizer = GraphRealizer(0, 24)
        graph = realizer.realize(two_object_scene(), RealizeNoise(), stream(0, "r"))
        assert graph.feature_matrix().shape == (2, 24)
