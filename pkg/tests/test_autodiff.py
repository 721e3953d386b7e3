import numpy as np
import pytest

from gnnsql import autodiff as ad
from gnnsql import gradcheck
from gnnsql.autodiff import NonFiniteError, ShapeError, Tensor


def leaf(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


@pytest.fixture(autouse=True)
def fresh_tape():
    ad.reset_tape()
    yield
    ad.reset_tape()


class TestForward:
    def test_softmax_symmetry(self):
        out = ad.softmax(leaf([0.0, 0.0]))
        assert np.allclose(out.data, [0.5, 0.5], atol=0)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        x = leaf(rng.normal(size=(5, 7)) * 30)
        out = ad.softmax(x, axis=1)
        assert np.all(out.data > 0)
        assert np.max(np.abs(out.data.sum(axis=1) - 1.0)) < 1e-12

    def test_matmul_identity(self):
        v = leaf([1.0, -2.0, 3.5])
        out = ad.matmul(ad.constant(np.eye(3)), v)
        assert np.array_equal(out.data, v.data)

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(leaf(np.zeros((2, 3))), leaf(np.zeros((2, 3))))

    def test_nonfinite_input_rejected_at_leaf(self):
        with pytest.raises(NonFiniteError):
            Tensor(np.array([1.0, np.inf]))

    def test_nonfinite_output_names_operation(self):
        x = leaf([-1.0])
        with pytest.raises(NonFiniteError, match="log"):
            ad.log(x)

    def test_gather_repeats_and_out_of_range(self):
        m = leaf(np.arange(6.0).reshape(3, 2))
        out = ad.gather(m, [2, 0, 2])
        assert np.array_equal(out.data, m.data[[2, 0, 2]])
        with pytest.raises(ShapeError):
            ad.gather(m, [3])


class TestBackward:
    def test_sum_grad_ones(self):
        x = leaf([1.0, 2.0, 3.0])
        ad.backward(ad.sum_reduce(x))
        assert np.array_equal(x.grad, np.ones(3))

    def test_dot_grads(self):
        x, y = leaf([1.0, 2.0]), leaf([3.0, 4.0])
        ad.backward(ad.matmul(x, y))
        assert np.array_equal(x.grad, y.data)
        assert np.array_equal(y.grad, x.data)

    def test_non_scalar_loss_rejected(self):
        x = leaf([1.0, 2.0])
        with pytest.raises(ShapeError, match="scalar"):
            ad.backward(ad.mul(x, x))

    def test_unreachable_grads_stay_zero(self):
        x, y = leaf([1.0, 2.0]), leaf([5.0, 6.0])
        ad.backward(ad.sum_reduce(x))
        assert np.array_equal(y.grad, np.zeros(2))

    def test_repeated_backward_is_accumulation_at_leaves(self):
        x = leaf([1.0, 2.0])
        loss = ad.sum_reduce(x)
        ad.backward(loss)
        ad.backward(loss)
        assert np.array_equal(x.grad, 2 * np.ones(2))

    def test_softmax_cross_entropy_uniform_logits(self):
        # d/dx of -log softmax(x)[0] at x = 0 is softmax(x) - onehot(0).
        x = leaf([0.0, 0.0, 0.0])

        def loss_fn():
            return ad.neg(ad.log(ad.pick(ad.softmax(x), 0)))

        ad.reset_tape()
        loss = loss_fn()
        ad.backward(loss)
        assert np.allclose(x.grad, [-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], atol=1e-12)
        numeric = gradcheck.numeric_gradient(loss_fn, x)
        assert np.allclose(x.grad, numeric, atol=1e-9)

    def test_max_axis_grad_through_first_argmax(self):
        x = leaf([[1.0, 3.0, 3.0], [2.0, 0.0, 1.0]])
        ad.backward(ad.sum_reduce(ad.max_reduce(x, axis=1)))
        expected = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        assert np.array_equal(x.grad, expected)

    def test_backward_off_tape_rejected(self):
        x = leaf([2.0])
        loss = ad.sum_reduce(x)
        ad.reset_tape()
        with pytest.raises(ad.AutodiffError, match="tape"):
            ad.backward(loss)


OPS = {
    "add": lambda a, b: ad.add(a, b),
    "mul": lambda a, b: ad.mul(a, b),
    "div": lambda a, b: ad.div(a, b),
    "matmul_mv": lambda a, b: ad.matmul(ad.reshape(a, (2, 2)), ad.narrow(b, 0, 0, 2)),
    "tanh": lambda a, b: ad.tanh(ad.add(a, b)),
    "sigmoid": lambda a, b: ad.sigmoid(ad.sub(a, b)),
    "softmax": lambda a, b: ad.softmax(ad.mul(a, b)),
    "concat": lambda a, b: ad.concat([a, b]),
    "max": lambda a, b: ad.concat([ad.reshape(ad.max_reduce(a), (1,)), b]),
    "sqrt": lambda a, b: ad.sqrt(ad.add(ad.mul(a, a), ad.mul(b, b))),
    "exp_log": lambda a, b: ad.log(ad.add(ad.exp(a), ad.exp(b))),
    "gather": lambda a, b: ad.gather(ad.stack([a, b]), [1, 0, 1]),
    "gather_cols": lambda a, b: ad.gather(ad.stack([a, b]), [2, 0, 2, 1], axis=1),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(hash(name) % (2**32))
    a = leaf(rng.normal(size=4))
    b = leaf(rng.normal(size=4) + 2.0)
    weights = ad.constant(rng.normal(size=16))

    def loss_fn():
        out = OPS[name](a, b)
        flat = ad.reshape(out, (out.data.size,))
        w = ad.narrow(weights, 0, 0, out.data.size)
        return ad.matmul(flat, w)

    report = gradcheck.gradient_report(loss_fn, {"a": a, "b": b})
    assert report.ok, [f"{e.name}: rel {e.worst_rel:.2e}" for e in report.entries]


def test_tape_replay_determinism():
    def run():
        rng = np.random.default_rng(11)
        ad.reset_tape()
        x = leaf(rng.normal(size=(3, 3)))
        y = ad.softmax(ad.tanh(ad.matmul(x, x)), axis=1)
        loss = ad.sum_reduce(ad.mul(y, y))
        ad.backward(loss)
        return loss.data.copy(), x.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert np.array_equal(l1, l2)
    assert np.array_equal(g1, g2)


def test_no_grad_skips_recording():
    x = leaf([1.0, 2.0])
    with ad.no_grad():
        y = ad.tanh(x)
    assert not y.requires_grad
    assert ad.tape_size() == 0
