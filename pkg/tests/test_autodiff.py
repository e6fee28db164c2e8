"""Engine tests: primitive forwards vs independent oracles, backward vs
central finite differences, detach/accumulation semantics, determinism."""

import numpy as np
import pytest

from sgvqa.autodiff import (
    Tape, Tensor, apply_primitive, backward, concat, detach, dropout, elu,
    exp, finite_diff_check, l2_normalize, leaky_relu, log, matmul, max_rel_err,
    mul, no_grad, relu, reshape, softmax, sub, tmax, tmean, transpose, tsum, add,
)
from sgvqa.rng import stream


def naive_matmul(a, b):
    """Independent triple-loop oracle."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


class TestForward:
    def test_softmax_symmetry(self):
        out = softmax(Tensor([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_dropout_eval_identity(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        out = dropout(x, rate=0.2, train=False)
        np.testing.assert_array_equal(out.data, x.data)

    def test_dropout_train_scales(self):
        rng = stream(0, "test.dropout")
        x = Tensor(np.ones((50, 40)))
        out = dropout(x, rate=0.2, train=True, rng=rng)
        kept = out.data != 0.0
        np.testing.assert_allclose(out.data[kept], 1.0 / 0.8)
        assert 0.7 < kept.mean() < 0.9

    def test_matmul_against_triple_loop(self):
        rng = stream(1, "test.matmul")
        a = rng.normal(size=(2, 3))
        b = rng.normal(size=(3, 2))
        got = matmul(Tensor(a), Tensor(b)).data
        np.testing.assert_allclose(got, naive_matmul(a, b), rtol=1e-14)

    def test_matmul_vector_cases(self):
        rng = stream(2, "test.matmul.vec")
        a = rng.normal(size=4)
        B = rng.normal(size=(4, 3))
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(B)).data, a @ B)
        np.testing.assert_allclose(matmul(Tensor(B.T), Tensor(a)).data, B.T @ a)
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(a)).data, a @ a)

    def test_l2_normalize_norm_floor(self):
        with pytest.raises(ValueError, match="norm below floor"):
            l2_normalize(Tensor([0.0, 0.0]))

    def test_log_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="positive"):
            log(Tensor([1.0, 0.0]))

    def test_softmax_empty_axis_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            softmax(Tensor(np.zeros((2, 0))))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_finite_outputs_on_finite_inputs(self):
        rng = stream(3, "test.finite")
        x = Tensor(rng.normal(scale=2.0, size=(4, 5)))
        for kind in ["relu", "elu", "leaky_relu", "softmax", "exp"]:
            out = apply_primitive(kind, [x])
            assert np.isfinite(out.data).all(), kind

    def test_apply_primitive_dispatch(self):
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 4.0])
        np.testing.assert_allclose(apply_primitive("add", [a, b]).data, [4.0, 6.0])
        with pytest.raises(ValueError, match="unknown primitive"):
            apply_primitive("convolve", [a])


class TestBackward:
    def test_square_derivative(self):
        x = Tensor(3.0, requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
        backward(y, tape)
        assert x.grad == pytest.approx(6.0)

    def test_softmax_cross_entropy_closed_form(self):
        # d(CE(softmax(z), onehot))/dz = probs - onehot
        rng = stream(4, "test.ce")
        z = Tensor(rng.normal(size=7), requires_grad=True)
        target = 2
        with Tape() as tape:
            p = softmax(z)
            loss = -log(tsum(mul(p, Tensor(np.eye(7)[target]))))
        backward(loss, tape)
        probs = np.exp(z.data) / np.exp(z.data).sum()
        expected = probs - np.eye(7)[target]
        np.testing.assert_allclose(z.grad, expected, atol=1e-12)

    def test_three_layer_composite_vs_finite_differences(self):
        rng = stream(5, "test.composite")
        W1 = Tensor(rng.normal(size=(4, 5)), requires_grad=True, name="W1")
        W2 = Tensor(rng.normal(size=(5, 3)), requires_grad=True, name="W2")
        W3 = Tensor(rng.normal(size=(3, 2)), requires_grad=True, name="W3")
        x = Tensor(rng.normal(size=(2, 4)))

        def fn():
            h = elu(matmul(x, W1))
            h = relu(add(matmul(h, W2), Tensor(0.1)))
            h = softmax(matmul(h, W3), axis=1)
            return tmean(mul(h, h))

        records = finite_diff_check(fn, [W1, W2, W3], eps=1e-5)
        assert max_rel_err(records) <= 1e-6

    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
        with pytest.raises(ValueError, match="scalar"):
            backward(y, tape)

    def test_accumulation_until_zeroed(self):
        x = Tensor(2.0, requires_grad=True)
        for expected in (4.0, 8.0):
            with Tape() as tape:
                y = mul(x, x)
            backward(y, tape)
            assert x.grad == pytest.approx(expected)
        x.zero_grad()
        assert x.grad is None

    def test_backward_linearity(self):
        rng = stream(6, "test.linear")
        xv = rng.normal(size=5)
        a, b = 1.7, -0.3

        def grad_of(scale_f, scale_g):
            x = Tensor(xv, requires_grad=True)
            with Tape() as tape:
                f = tsum(mul(x, x))
                g = tsum(exp(x))
                loss = add(mul(f, Tensor(scale_f)), mul(g, Tensor(scale_g)))
            backward(loss, tape)
            return x.grad

        combined = grad_of(a, b)
        expected = a * grad_of(1.0, 0.0) + b * grad_of(0.0, 1.0)
        np.testing.assert_allclose(combined, expected, atol=1e-10)

    def test_unreached_param_grad_stays_none(self):
        x = Tensor(1.0, requires_grad=True)
        y = Tensor(1.0, requires_grad=True)
        with Tape() as tape:
            loss = mul(x, x)
        backward(loss, tape)
        assert y.grad is None

    def test_max_tie_routes_to_lowest_index(self):
        x = Tensor([2.0, 5.0, 5.0], requires_grad=True)
        with Tape() as tape:
            y = tmax(x)
        backward(y, tape)
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


class TestDetach:
    def test_value_preserving(self):
        x = Tensor(np.arange(4.0), requires_grad=True)
        d = detach(x)
        np.testing.assert_array_equal(d.data, x.data)
        assert not d.requires_grad

    def test_gradient_annihilating(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = Tensor([3.0, 4.0], requires_grad=True)
        with Tape() as tape:
            loss = tsum(mul(detach(x), y))
        backward(loss, tape)
        assert x.grad is None
        np.testing.assert_array_equal(y.grad, [1.0, 2.0])

    def test_detached_branch_params_get_zero_grad(self):
        # loss = D-like coupling of two branches; frozen branch sees nothing
        rng = stream(7, "test.detach")
        Wp = Tensor(rng.normal(size=(3, 3)), requires_grad=True, name="Wp")
        Wz = Tensor(rng.normal(size=(3, 3)), requires_grad=True, name="Wz")
        x1 = Tensor(rng.normal(size=3))
        x2 = Tensor(rng.normal(size=3))

        def fn(freeze_z: bool):
            p = l2_normalize(matmul(x1, Wp))
            z = l2_normalize(matmul(x2, Wz))
            if freeze_z:
                z = detach(z)
            return sub(Tensor(1.0), tsum(mul(p, z)))

        records = finite_diff_check(lambda: fn(True), [Wp], eps=1e-5)
        assert max_rel_err(records) <= 1e-6
        with Tape() as tape:
            loss = fn(True)
        backward(loss, tape)
        assert Wz.grad is None
        assert Wp.grad is not None


class TestPrimitiveGradients:
    """Every primitive's JVP vs central differences, random inputs, dims <= 8."""

    @pytest.mark.parametrize("trial", range(3))
    @pytest.mark.parametrize(
        "kind,attrs",
        [
            ("add", {}), ("sub", {}), ("mul", {}),
            ("sum", {}), ("sum", {"axis": 1}), ("mean", {}), ("mean", {"axis": 0}),
            ("max", {}), ("max", {"axis": 1}),
            ("softmax", {"axis": 1}), ("log", {}), ("exp", {}),
            ("relu", {}), ("elu", {}), ("leaky_relu", {"slope": 0.2}),
            ("l2_normalize", {"axis": 1}),
            ("reshape", {"shape": (8, 3)}), ("transpose", {}),
        ],
    )
    def test_primitive_fd(self, kind, attrs, trial):
        rng = stream(100 + trial, f"test.prim.{kind}")
        shape = (6, 4)
        data = rng.uniform(-2.0, 2.0, size=shape)
        if kind == "log":
            data = np.abs(data) + 0.5
        # keep away from relu/max kinks so central differences are valid
        if kind in ("relu", "elu", "leaky_relu"):
            data = data + 0.1 * np.sign(data)
        binary = kind in ("add", "sub", "mul")
        a = Tensor(data, requires_grad=True, name="a")
        params = [a]
        if binary:
            b = Tensor(rng.uniform(-2.0, 2.0, size=(1, 4)), requires_grad=True, name="b")
            params.append(b)

        def fn():
            out = apply_primitive(kind, params, **attrs)
            # random cotangent probe; sum-of-squares would be degenerate for
            # scale-invariant ops like l2_normalize
            probe = stream(7, f"probe.{kind}").normal(size=out.data.shape)
            return tsum(mul(out, Tensor(probe)))

        assert max_rel_err(finite_diff_check(fn, params, eps=1e-5)) <= 1e-4

    def test_concat_gradient(self):
        rng = stream(8, "test.concat")
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True, name="a")
        b = Tensor(rng.normal(size=(4, 3)), requires_grad=True, name="b")

        def fn():
            c = concat([a, b], axis=0)
            return tsum(mul(c, c))

        assert max_rel_err(finite_diff_check(fn, [a, b], eps=1e-5)) <= 1e-6

    def test_dropout_gradient_fixed_mask(self):
        x = Tensor(stream(9, "t").normal(size=(4, 4)) + 3.0, requires_grad=True, name="x")

        def fn():
            out = dropout(x, rate=0.3, train=True, rng=stream(9, "test.dropout.mask"))
            return tsum(out)

        assert max_rel_err(finite_diff_check(fn, [x], eps=1e-5)) <= 1e-6


class TestGradCheckHarness:
    def test_sum_of_squares_exact(self):
        rng = stream(10, "test.sos")
        ps = [Tensor(rng.normal(size=(3, 2)), requires_grad=True, name=f"p{i}") for i in range(2)]

        def fn():
            return tsum(concat([mul(p, p) for p in ps], axis=0))

        assert max_rel_err(finite_diff_check(fn, ps, eps=1e-5)) <= 1e-6

    def test_corrupted_gradient_detected(self):
        # a +10% corruption on one weight's gradient must register as >= 0.05
        rng = stream(11, "test.corrupt")
        w = Tensor(rng.normal(size=4) + 2.0, requires_grad=True, name="w")

        def fn():
            return tsum(mul(w, w))

        with Tape() as tape:
            loss = fn()
        backward(loss, tape)
        analytic = w.grad.copy()
        analytic[0] *= 1.10

        numeric = np.zeros(4)
        eps = 1e-5
        for i in range(4):
            orig = w.data[i]
            w.data[i] = orig + eps
            with no_grad():
                fp = float(fn().data)
            w.data[i] = orig - eps
            with no_grad():
                fm = float(fn().data)
            w.data[i] = orig
            numeric[i] = (fp - fm) / (2 * eps)
        rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        assert rel.max() >= 0.05

    def test_eps_bounds_enforced(self):
        w = Tensor([1.0], requires_grad=True)
        with pytest.raises(ValueError, match="eps"):
            finite_diff_check(lambda: tsum(w), [w], eps=1e-2)


class TestDeterminism:
    def test_bitwise_identical_forward_and_grads(self):
        def run():
            rng = stream(12, "test.det")
            W = Tensor(rng.normal(size=(5, 5)), requires_grad=True)
            x = Tensor(rng.normal(size=(3, 5)))
            with Tape() as tape:
                h = elu(matmul(x, W))
                out = tmean(softmax(h, axis=1))
            backward(out, tape)
            return out.data.copy(), W.grad.copy()

        (o1, g1), (o2, g2) = run(), run()
        assert np.array_equal(o1, o2)
        assert np.array_equal(g1, g2)

    def test_tape_thread_confinement_api(self):
        # nested tapes enter/exit LIFO; no_grad suppresses recording
        x = Tensor(1.0, requires_grad=True)
        with Tape() as outer:
            y = mul(x, x)
            with no_grad():
                z = mul(y, y)
        assert len(outer) == 1
        assert not z.requires_grad
