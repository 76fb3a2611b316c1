import numpy as np
import pytest
from conftest import collect_grads, finite_diff, max_rel_err

from fcrn import autodiff as ad


class TestDense:
    def test_identity(self):
        x = ad.Var(np.array([[1.0, 2.0, 3.0]]))
        out = ad.dense(x, ad.Var(np.eye(3)), ad.Var(np.zeros(3)))
        assert np.allclose(out.value, x.value)

    def test_constant_map(self):
        x = ad.Var(np.array([[5.0, -2.0]]))
        out = ad.dense(x, ad.Var(np.zeros((2, 2))), ad.Var(np.array([3.0, 4.0])))
        assert np.allclose(out.value, [[3.0, 4.0]])

    def test_hand_matvec(self):
        x = ad.Var(np.array([[1.0, 1.0]]))
        w = ad.Var(np.array([[1.0, 2.0], [3.0, 4.0]]))
        out = ad.dense(x, w, ad.Var(np.zeros(2)))
        assert np.allclose(out.value, [[3.0, 7.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ad.dense(ad.Var(np.ones((1, 3))), ad.Var(np.ones((2, 4))),
                     ad.Var(np.zeros(2)))


class TestActivations:
    def test_relu_values(self):
        out = ad.relu(ad.Var(np.array([-1.0, 0.0, 2.0])))
        assert out.value.tolist() == [0.0, 0.0, 2.0]

    def test_relu_gradient_branches(self):
        for x0, expected in ((2.0, 1.0), (-3.0, 0.0), (0.0, 0.0)):
            x = ad.Var(np.array(x0), requires_grad=True)
            ad.backward(ad.relu(x))
            assert x.grad == expected

    def test_softmax_uniform(self):
        out = ad.softmax(ad.Var(np.zeros((1, 3))))
        assert np.allclose(out.value, 1.0 / 3.0)

    def test_softmax_stability(self):
        out = ad.softmax(ad.Var(np.array([[1000.0, 0.0]])))
        assert np.isfinite(out.value).all()
        assert out.value[0, 0] == pytest.approx(1.0)

    def test_softmax_closed_form(self):
        out = ad.softmax(ad.Var(np.array([[np.log(2.0), 0.0]])))
        assert np.allclose(out.value, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-14)

    def test_softmax_sums_to_one(self):
        rng = np.random.RandomState(0)
        for _ in range(20):
            logits = rng.uniform(-30, 30, size=(4, 5))
            out = ad.softmax(ad.Var(logits))
            assert np.allclose(out.value.sum(axis=1), 1.0, atol=1e-12)

    def test_sigmoid(self):
        assert ad.sigmoid(ad.Var(np.array(0.0))).value == pytest.approx(0.5)
        assert ad.sigmoid(ad.Var(np.array(50.0))).value == pytest.approx(1.0, abs=1e-15)
        assert ad.sigmoid(ad.Var(np.array(np.log(3.0)))).value == pytest.approx(0.75)

    def test_sigmoid_no_overflow(self):
        out = ad.sigmoid(ad.Var(np.array([-800.0, 800.0])))
        assert np.isfinite(out.value).all()


class TestBackward:
    def test_square(self):
        x = ad.Var(np.array(3.0), requires_grad=True)
        ad.backward(x * x)
        assert x.grad == pytest.approx(6.0)

    def test_constant_has_no_grad(self):
        x = ad.Var(np.array(3.0), requires_grad=True)
        c = ad.Var(np.array(5.0))
        ad.backward(x * c)
        assert c.grad is None

    def test_backward_requires_scalar(self):
        x = ad.Var(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            ad.backward(x + x)

    def test_gather_ops(self):
        a = ad.Var(np.arange(12.0).reshape(4, 3), requires_grad=True)
        rows = ad.take_rows(a, [1, 1, 3])
        loss = ad.vsum(rows)
        ad.backward(loss)
        expected = np.zeros((4, 3))
        expected[1] = 2.0
        expected[3] = 1.0
        assert np.array_equal(a.grad, expected)

    def test_random_graphs_match_finite_differences(self):
        # the gradient oracle: random small MLP-like graphs, both heads
        rng = np.random.RandomState(42)
        for trial in range(30):
            n_in, n_hidden, n_out = rng.randint(2, 5, size=3)
            x = ad.Var(rng.randn(4, n_in))
            w1 = ad.Var(rng.randn(n_hidden, n_in) * 0.7, requires_grad=True)
            b1 = ad.Var(rng.randn(n_hidden) * 0.1, requires_grad=True)
            w2 = ad.Var(rng.randn(n_out, n_hidden) * 0.7, requires_grad=True)
            b2 = ad.Var(rng.randn(n_out) * 0.1, requires_grad=True)
            targets = rng.randint(0, n_out, size=4)

            def loss_fn():
                h = ad.tanh(ad.dense(x, w1, b1))
                p = ad.softmax(ad.dense(h, w2, b2), axis=1)
                return -ad.vmean(ad.log(ad.clamp_min(ad.pick(p, targets), 1e-12)))

            params = [w1, b1, w2, b2]
            analytic = collect_grads(loss_fn, params)
            numeric = finite_diff(loss_fn, params)
            assert max_rel_err(analytic, numeric) < 1e-5

    def test_determinism(self):
        def run():
            rng = np.random.RandomState(7)
            x = ad.Var(rng.randn(3, 2))
            w = ad.Var(rng.randn(4, 2), requires_grad=True)
            loss = ad.vmean(ad.relu(ad.matmul(x, ad.transpose(w))))
            ad.backward(loss)
            return loss.value.copy(), w.grad.copy()
        l1, g1 = run()
        l2, g2 = run()
        assert np.array_equal(l1, l2) and np.array_equal(g1, g2)


class TestAdam:
    def test_first_step_magnitude(self):
        p = ad.Var(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.array([0.3, -0.8])
        state = ad.AdamState([p])
        before = p.value.copy()
        ad.adam_step([p], state, lr=0.01)
        # bias-corrected first step moves by ~lr in the gradient direction
        assert np.allclose(np.abs(p.value - before), 0.01, rtol=1e-6)
        assert np.all(np.sign(before - p.value) == np.sign(p.grad))

    def test_zero_gradient_fixed_point(self):
        p = ad.Var(np.array([1.0]), requires_grad=True)
        state = ad.AdamState([p])
        for _ in range(10):
            p.grad = np.zeros(1)
            ad.adam_step([p], state, lr=0.01)
        assert p.value[0] == 1.0

    def test_zero_lr_noop(self):
        p = ad.Var(np.array([1.0]), requires_grad=True)
        p.grad = np.array([5.0])
        ad.adam_step([p], ad.AdamState([p]), lr=0.0)
        assert p.value[0] == 1.0
