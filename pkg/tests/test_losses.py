"""Loss oracle equivalence (brute force), closed-form anchors, and the
permutation/scale/bound/stop-gradient properties."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgvqa.autodiff import Tape, Tensor, backward, detach, matmul, tsum
from sgvqa.losses import (
    DualViewItem, LossConfig, cosine_distance, global_loss, link_reg,
    local_loss, selfsim_loss, supervised_loss, total_loss,
)
from sgvqa.rng import stream

from oracles import (
    o_global, o_link, o_local, o_selfsim_j, o_supervised, rand_dist, rows,
)


class TestClosedForms:
    def test_cosine_anchors(self):
        assert cosine_distance(Tensor([1.0, 0.0]), Tensor([1.0, 0.0])).item() == pytest.approx(0.0, abs=1e-12)
        assert cosine_distance(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == pytest.approx(1.0, abs=1e-12)
        assert cosine_distance(Tensor([1.0, 0.0]), Tensor([-1.0, 0.0])).item() == pytest.approx(2.0, abs=1e-12)

    def test_cosine_scale_invariance(self):
        rng = stream(0, "t.scale")
        a, b = rng.normal(size=5) + 2, rng.normal(size=5) + 2
        base = cosine_distance(Tensor(a), Tensor(b)).item()
        for c in (1e-3, 7.0, 1e4):
            assert cosine_distance(Tensor(c * a), Tensor(b)).item() == pytest.approx(base, abs=1e-10)

    def test_local_perfect_matching_zero(self):
        eye = np.eye(3)
        val = local_loss(Tensor(eye), Tensor(eye[::-1].copy()),
                         Tensor(eye[[1, 2, 0]]), Tensor(eye)).item()
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_local_orthogonal_singletons(self):
        val = local_loss(Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0]]),
                         Tensor([[0.0, 1.0]]), Tensor([[1.0, 0.0]])).item()
        assert val == pytest.approx(1.0, abs=1e-12)

    def test_global_aligned_zero_and_antipodal_two(self):
        a = np.array([1.0, 2.0, 3.0])
        assert global_loss(Tensor(3 * a), Tensor(a), Tensor(a), Tensor(5 * a)).item() == pytest.approx(0.0, abs=1e-12)
        assert global_loss(Tensor(a), Tensor(-a), Tensor(-2 * a), Tensor(a)).item() == pytest.approx(2.0, abs=1e-12)

    def test_selfsim_two_nodes_zero_j(self):
        rng = stream(1, "t.ss2")
        z1, z2 = rows(rng, 2, 4), rows(rng, 2, 4)
        p1, p2 = rows(rng, 2, 4), rows(rng, 2, 4)
        got = selfsim_loss(Tensor(z1), Tensor(z2), Tensor(p1), Tensor(p2), tau=0.1).item()
        want = o_local(p1, z2, p2, z1)  # J vanishes for singleton off-diagonals
        assert got == pytest.approx(want, abs=1e-12)

    def test_selfsim_three_equidistant_ln2(self):
        # three unit vectors at 120 degrees: pairwise equidistant; z2 = z1
        ang = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
        z = np.array([[math.cos(a), math.sin(a)] for a in ang])
        p = rows(stream(2, "t.ss3"), 3, 2)
        got = selfsim_loss(Tensor(z), Tensor(z.copy()), Tensor(p), Tensor(p.copy()), tau=0.1).item()
        local_part = o_local(p, z, p, z)
        assert got - local_part == pytest.approx(math.log(2.0), abs=1e-10)

    def test_link_reg_anchors(self):
        onehot = np.array([[1.0, 0.0]])
        assert link_reg(Tensor(onehot), Tensor(onehot.copy())).item() == pytest.approx(0.0, abs=1e-9)
        uniform = np.array([[0.5, 0.5]])
        assert link_reg(Tensor(onehot), Tensor(uniform)).item() == pytest.approx(math.log(2.0), abs=1e-10)

    def test_supervised_anchors(self):
        assert supervised_loss(Tensor(np.zeros(32)), 5).item() == pytest.approx(math.log(32.0), abs=1e-12)
        spiked = np.zeros(5)
        spiked[3] = 20.0
        assert supervised_loss(Tensor(spiked), 3).item() <= 1e-8  # 4*exp(-20)


class TestOracleEquivalence:
    N_INSTANCES = 60  # the acceptance suite runs the full 1000 per loss

    def test_local(self):
        rng = stream(3, "t.oracle.local")
        for _ in range(self.N_INSTANCES):
            o1, o2, d = rng.integers(1, 7), rng.integers(1, 7), rng.integers(2, 9)
            p1, z2 = rows(rng, o1, d), rows(rng, o2, d)
            p2, z1 = rows(rng, o2, d), rows(rng, o1, d)
            got = local_loss(Tensor(p1), Tensor(z2), Tensor(p2), Tensor(z1)).item()
            assert abs(got - o_local(p1, z2, p2, z1)) <= 1e-10

    def test_global(self):
        rng = stream(4, "t.oracle.global")
        for _ in range(self.N_INSTANCES):
            d = rng.integers(2, 9)
            p1, z2, p2, z1 = (rows(rng, 1, d)[0] for _ in range(4))
            got = global_loss(Tensor(p1), Tensor(z2), Tensor(p2), Tensor(z1)).item()
            assert abs(got - o_global(p1, z2, p2, z1)) <= 1e-10

    def test_selfsim(self):
        rng = stream(5, "t.oracle.selfsim")
        for _ in range(self.N_INSTANCES):
            o, d = rng.integers(2, 7), rng.integers(2, 9)
            z1, z2 = rows(rng, o, d), rows(rng, o, d)
            p1, p2 = rows(rng, o, d), rows(rng, o, d)
            tau = float(rng.uniform(0.05, 1.0))
            got = selfsim_loss(Tensor(z1), Tensor(z2), Tensor(p1), Tensor(p2), tau).item()
            want = o_local(p1, z2, p2, z1) + o_selfsim_j(z1, z2, tau)
            assert abs(got - want) <= 1e-10

    def test_link(self):
        rng = stream(6, "t.oracle.link")
        for _ in range(self.N_INSTANCES):
            e, k = rng.integers(1, 8), rng.integers(2, 8)
            r1, r2 = rand_dist(rng, e, k), rand_dist(rng, e, k)
            got = link_reg(Tensor(r1), Tensor(r2)).item()
            assert abs(got - o_link(r1, r2)) <= 1e-10

    def test_supervised(self):
        rng = stream(7, "t.oracle.sup")
        for _ in range(self.N_INSTANCES):
            n = int(rng.integers(2, 12))
            logits = rng.normal(scale=3.0, size=n)
            ans = int(rng.integers(n))
            got = supervised_loss(Tensor(logits), ans).item()
            assert abs(got - o_supervised(logits, ans)) <= 1e-10

    def test_total_fixed_four_node_instance(self):
        rng = stream(8, "t.oracle.total")
        z1, z2 = rows(rng, 4, 6), rows(rng, 4, 6)
        p1, p2 = rows(rng, 4, 6), rows(rng, 4, 6)
        r1, r2 = rand_dist(rng, 5, 5), rand_dist(rng, 5, 5)
        logits = rng.normal(size=8)
        item = DualViewItem(answer=2, logits=Tensor(logits), z1=Tensor(z1), z2=Tensor(z2),
                            p1=Tensor(p1), p2=Tensor(p2), r1=Tensor(r1), r2=Tensor(r2))
        cfg = LossConfig(variant="selfsim", link_reg=True, alpha=1.0, beta=1.0, tau=0.1)
        got, parts = total_loss(cfg, [item])
        want = (
            o_supervised(logits, 2)
            + o_local(p1, z2, p2, z1) + o_selfsim_j(z1, z2, 0.1)
            + o_link(r1, r2)
        )
        assert abs(got.item() - want) <= 1e-10
        assert parts.j_e == pytest.approx(o_link(r1, r2), abs=1e-10)


class TestProperties:
    def test_local_permutation_invariance_exact(self):
        rng = stream(9, "t.perm")
        p1, z2 = rows(rng, 5, 4), rows(rng, 6, 4)
        p2, z1 = rows(rng, 6, 4), rows(rng, 5, 4)
        base = local_loss(Tensor(p1), Tensor(z2), Tensor(p2), Tensor(z1)).item()
        for _ in range(100):
            perm_p = rng.permutation(5)
            perm_z = rng.permutation(6)
            permuted = local_loss(
                Tensor(p1[perm_p]), Tensor(z2[perm_z]),
                Tensor(p2[perm_z]), Tensor(z1[perm_p]),
            ).item()
            assert permuted == base  # exact: min and sorted-mean are order-free

    def test_role_swap_symmetry(self):
        rng = stream(10, "t.swap")
        p1, z2 = rows(rng, 3, 5), rows(rng, 4, 5)
        p2, z1 = rows(rng, 4, 5), rows(rng, 3, 5)
        a = local_loss(Tensor(p1), Tensor(z2), Tensor(p2), Tensor(z1)).item()
        b = local_loss(Tensor(p2), Tensor(z1), Tensor(p1), Tensor(z2)).item()
        assert a == b
        g1, g2 = rows(rng, 1, 5)[0], rows(rng, 1, 5)[0]
        ga = global_loss(Tensor(g1), Tensor(g2), Tensor(g2), Tensor(g1)).item()
        gb = global_loss(Tensor(g2), Tensor(g1), Tensor(g1), Tensor(g2)).item()
        assert ga == gb

    def test_scale_invariance_per_vector(self):
        rng = stream(11, "t.scale2")
        p1, z2 = rows(rng, 3, 4), rows(rng, 3, 4)
        p2, z1 = rows(rng, 3, 4), rows(rng, 3, 4)
        base = local_loss(Tensor(p1), Tensor(z2), Tensor(p2), Tensor(z1)).item()
        scales = rng.uniform(0.2, 5.0, size=(3, 1))
        scaled = local_loss(Tensor(p1 * scales), Tensor(z2), Tensor(p2), Tensor(z1 * scales)).item()
        assert scaled == pytest.approx(base, abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(2, 8), st.integers(0, 10_000))
    def test_bounds_hypothesis(self, o1, o2, d, seed):
        rng = stream(seed, "t.bounds")
        p1, z2 = rows(rng, o1, d), rows(rng, o2, d)
        p2, z1 = rows(rng, o2, d), rows(rng, o1, d)
        lv = local_loss(Tensor(p1), Tensor(z2), Tensor(p2), Tensor(z1)).item()
        assert -1e-12 <= lv <= 2.0 + 1e-12
        gv = global_loss(Tensor(p1[0]), Tensor(z2[0]), Tensor(p2[0]), Tensor(z1[0])).item()
        assert -1e-12 <= gv <= 2.0 + 1e-12
        if o1 == o2 and o1 >= 2:
            sv = selfsim_loss(Tensor(z1), Tensor(z2), Tensor(p1), Tensor(p2), 0.2).item()
            assert sv >= lv - 1e-10  # J >= 0
        r1, r2 = rand_dist(rng, 3, d), rand_dist(rng, 3, d)
        assert link_reg(Tensor(r1), Tensor(r2)).item() >= -1e-12
        assert supervised_loss(Tensor(rng.normal(size=d)), 0).item() >= 0.0

    def test_near_zero_norm_rejected(self):
        with pytest.raises(ValueError, match="norm below floor"):
            cosine_distance(Tensor([1e-13, 0.0]), Tensor([1.0, 0.0]))

    def test_tie_break_does_not_change_value(self):
        # duplicated best-match columns: value equals the brute-force min
        p = np.array([[1.0, 0.0]])
        z = np.array([[0.8, 0.2], [0.8, 0.2], [0.0, 1.0]])
        got = local_loss(Tensor(p), Tensor(z), Tensor(z), Tensor(np.vstack([p] * 3))).item()
        want = o_local(p, z, z, np.vstack([p] * 3))
        assert got == pytest.approx(want, abs=1e-12)


class TestStopGradient:
    def _branches(self, seed=12):
        rng = stream(seed, "t.sg")
        Wa = Tensor(rng.normal(size=(4, 4)), requires_grad=True, name="Wa")
        Wz = Tensor(rng.normal(size=(4, 4)), requires_grad=True, name="Wz")
        x1, x2 = Tensor(rows(rng, 3, 4)), Tensor(rows(rng, 3, 4))
        return Wa, Wz, x1, x2

    def test_z_branch_gets_zero_gradient(self):
        Wa, Wz, x1, x2 = self._branches()
        with Tape() as tape:
            p1 = matmul(x1, Wa)
            z2 = matmul(x2, Wz)
            p2 = matmul(x2, Wa)
            z1 = matmul(x1, Wz)
            loss = local_loss(p1, detach(z2), p2, detach(z1))
        backward(loss, tape)
        assert Wz.grad is None
        assert Wa.grad is not None and np.abs(Wa.grad).max() > 0

    def test_detached_equals_constant_substitution(self):
        Wa, Wz, x1, x2 = self._branches(13)

        def grad_with(make_z):
            Wa.grad = None
            with Tape() as tape:
                p1 = matmul(x1, Wa)
                p2 = matmul(x2, Wa)
                z1, z2 = make_z()
                loss = global_loss(
                    tsum(p1, axis=0), z2, tsum(p2, axis=0), z1
                )
            backward(loss, tape)
            return Wa.grad.copy()

        def live():
            z1 = tsum(matmul(x1, Wz), axis=0)
            z2 = tsum(matmul(x2, Wz), axis=0)
            return detach(z1), detach(z2)

        def const():
            z1 = Tensor(x1.data @ Wz.data).data.sum(axis=0)
            z2 = Tensor(x2.data @ Wz.data).data.sum(axis=0)
            return Tensor(z1), Tensor(z2)

        np.testing.assert_allclose(grad_with(live), grad_with(const), atol=1e-10)


class TestTotalLossConfig:
    def _item(self, seed=14):
        rng = stream(seed, "t.cfg")
        return DualViewItem(
            answer=1, logits=Tensor(rng.normal(size=6)),
            z1=Tensor(rows(rng, 3, 4)), z2=Tensor(rows(rng, 3, 4)),
            g1=Tensor(rows(rng, 1, 4)[0]), g2=Tensor(rows(rng, 1, 4)[0]),
            p1=Tensor(rows(rng, 3, 4)), p2=Tensor(rows(rng, 3, 4)),
        )

    def test_baseline_with_beta_rejected(self):
        with pytest.raises(ValueError, match="beta"):
            total_loss(LossConfig(variant="baseline", beta=1.0), [self._item()])

    def test_link_with_baseline_rejected(self):
        with pytest.raises(ValueError, match="link_reg"):
            LossConfig(variant="baseline", link_reg=True).validate()

    def test_alpha_only_equals_supervised(self):
        item = self._item()
        got, parts = total_loss(LossConfig(variant="baseline", alpha=1.0, beta=0.0), [item])
        want = supervised_loss(item.logits, item.answer).item()
        assert got.item() == pytest.approx(want, abs=1e-12)
        assert parts.l_prime == 0.0 and parts.j_e == 0.0

    def test_identical_views_perfect_predictor_global_zero_sim(self):
        rng = stream(15, "t.ident")
        g = rows(rng, 1, 5)[0]
        item = DualViewItem(answer=0, logits=Tensor(rng.normal(size=4)),
                            g1=Tensor(g), g2=Tensor(g.copy()),
                            p1=Tensor(g.copy()), p2=Tensor(g.copy()))
        got, parts = total_loss(LossConfig(variant="global", alpha=1.0, beta=1.0), [item])
        assert parts.l_prime == pytest.approx(0.0, abs=1e-12)
        assert got.item() == pytest.approx(parts.l_sup, abs=1e-12)

    def test_link_without_edges_rejected(self):
        cfg = LossConfig(variant="global", link_reg=True, beta=1.0)
        with pytest.raises(ValueError, match="aligned edges"):
            total_loss(cfg, [self._item()])
