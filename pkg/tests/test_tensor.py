import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import tscondense.tensor as T
from tscondense.tensor import ShapeError, Tensor, grad_check, no_grad


def t64(data, requires_grad=False):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


class TestForwardOracles:
    def test_mean_over_axis(self):
        out = t64([[1.0, 2.0], [3.0, 4.0]]).mean(axis=0)
        np.testing.assert_array_equal(out.data, [2.0, 3.0])

    def test_softmax_symmetry(self):
        out = T.softmax(t64([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, rtol=0, atol=1e-15)

    def test_causal_conv_hand_example(self):
        # kernel [1,1,1] over [1,2,3,4] with zero left-padding: running 3-sums
        x = t64([[[1.0], [2.0], [3.0], [4.0]]])
        w = t64(np.ones((3, 1, 1)))
        out = T.conv1d_causal(x, w)
        np.testing.assert_array_equal(out.data.ravel(), [1.0, 3.0, 6.0, 9.0])

    def test_causal_conv_matches_direct_sum(self, rng):
        # oracle: explicit sum over the kernel window on the zero-padded input
        x = rng.standard_normal((2, 9, 3))
        w = rng.standard_normal((5, 3, 4))
        out = T.conv1d_causal(t64(x), t64(w)).data
        pad = np.pad(x, ((0, 0), (4, 0), (0, 0)))
        expected = np.zeros((2, 9, 4))
        for b in range(2):
            for t in range(9):
                for k in range(5):
                    expected[b, t] += pad[b, t + k] @ w[k]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_causal_conv_is_causal(self, rng):
        x = rng.standard_normal((1, 8, 2))
        w = rng.standard_normal((3, 2, 2))
        base = T.conv1d_causal(t64(x), t64(w)).data
        x2 = x.copy()
        x2[0, 5:] += 10.0  # future change must not affect t < 5
        out = T.conv1d_causal(t64(x2), t64(w)).data
        np.testing.assert_array_equal(out[0, :5], base[0, :5])

    def test_conv_shape_mismatch_names_op_and_shapes(self):
        with pytest.raises(ShapeError, match=r"conv1d_causal.*\(1, 4, 3\).*\(3, 2, 1\)"):
            T.conv1d_causal(t64(np.zeros((1, 4, 3))), t64(np.zeros((3, 2, 1))))

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 5\)"):
            t64(np.zeros((2, 3))) @ t64(np.zeros((4, 5)))


class TestBackward:
    def test_sum_grad_is_ones(self):
        x = t64([1.0, 5.0, -2.0], requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_quadratic_grad(self):
        x = t64([1.0, 2.0], requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = t64([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * x).backward()

    def test_diamond_graph_accumulates(self):
        x = t64([3.0], requires_grad=True)
        y = x * x + x * x  # two paths into the same leaf
        y.sum().backward()
        np.testing.assert_array_equal(x.grad, [12.0])

    def test_cut_branch_leaf_gets_zero_grad(self):
        x = t64([1.0, 2.0], requires_grad=True)
        y = t64([3.0], requires_grad=True)
        loss = (x * 0.0).sum() + y.sum()
        loss.backward()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])
        np.testing.assert_array_equal(y.grad, [1.0])

    def test_backward_deterministic_bitwise(self, rng):
        data = rng.standard_normal((6, 4))
        w = rng.standard_normal((4, 3))

        def run():
            x = t64(data, requires_grad=True)
            out = T.softmax(T.tanh(x @ t64(w)), axis=-1)
            (out * out).mean().backward()
            return x.grad.copy()

        np.testing.assert_array_equal(run(), run())

    def test_take_accumulates_duplicates(self):
        x = t64([1.0, 2.0, 3.0], requires_grad=True)
        T.take(x, np.array([0, 0, 2])).sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])

    def test_composed_graph_matches_finite_differences(self, rng):
        w1 = t64(rng.standard_normal((5, 7)))
        w2 = t64(rng.standard_normal((7, 2)))

        def f(x):
            h = T.tanh(T.linear(x, w1))
            a = T.softmax(h @ w2, axis=-1)
            return (T.sigmoid(a) * a).mean() + (x * x).sum() * 0.01

        err = grad_check(f, t64(rng.standard_normal((3, 5))))
        assert err < 1e-4

    def test_detach_blocks_gradient(self):
        x = t64([2.0], requires_grad=True)
        y = (x * 3.0).detach()
        loss = (y * y).sum()
        assert not loss.requires_grad
        with pytest.raises(ValueError):
            loss.backward()


class TestGradCheckTool:
    def test_sum_error_tiny(self, rng):
        assert grad_check(lambda x: x.sum(), t64(rng.standard_normal(5))) < 1e-10

    def test_requires_float64(self):
        x = Tensor(np.zeros(3, dtype=np.float32))
        with pytest.raises(ValueError, match="float64"):
            grad_check(lambda t: t.sum(), x)

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_nonfinite_reported_with_index(self):
        def f(x):
            return T.log(x).sum()  # log of a negative entry -> nan gradient path

        with pytest.raises(FloatingPointError, match="index"):
            grad_check(f, t64([1.0, -1.0]))


OP_CASES = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / (b * b + 1.0),
    "div_denominator": lambda a, b: b / (a * a + 1.0),
    "neg": lambda a, b: -a,
    "matmul": lambda a, b: a @ b.transpose(),
    "linear": lambda a, b: T.linear(a, b.transpose()),
    "sigmoid": lambda a, b: T.sigmoid(a),
    "tanh": lambda a, b: T.tanh(a),
    "exp": lambda a, b: T.exp(a * 0.3),
    "log": lambda a, b: T.log(a * a + 1.0),
    "softmax": lambda a, b: T.softmax(a, axis=-1),
    "mean_axis": lambda a, b: a.mean(axis=1, keepdims=True),
    "sum_axis": lambda a, b: a.sum(axis=0),
    "concat": lambda a, b: T.concat([a, b], axis=1),
    "slice": lambda a, b: a[1:, :2],
    "take": lambda a, b: T.take(a, np.array([0, 0, 3, 1])),
    "reshape": lambda a, b: a.reshape(-1, 2),
    "transpose": lambda a, b: a.transpose(),
    "broadcast": lambda a, b: T.broadcast_to(a.mean(axis=0, keepdims=True), (4, 4)),
    "power": lambda a, b: (a * a + 1.0) ** 1.5,
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name, rng):
    op = OP_CASES[name]
    b = t64(rng.standard_normal((4, 4)))

    def f(a):
        out = op(a, b)
        return (out * out).sum() + out.sum() * 0.5

    err = grad_check(f, t64(rng.standard_normal((4, 4))), step=1e-5)
    assert err < 1e-4, f"{name}: {err}"


def test_relu_gradient_off_kink(rng):
    # inputs kept away from zero so the finite-difference probe never crosses it
    x = rng.standard_normal((5, 5))
    x = np.where(np.abs(x) < 0.01, 0.5, x)
    err = grad_check(lambda a: (T.relu(a) * 0.7).sum(), t64(x))
    assert err < 1e-8


def test_clip_gradient_interior_and_exterior():
    x = t64([-2.0, 0.5, 2.0], requires_grad=True)
    T.clip(x, -1.0, 1.0).sum().backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


def test_conv_gradients_match_finite_differences(rng):
    w = t64(rng.standard_normal((3, 2, 4)))
    bias = t64(rng.standard_normal(4))

    def fx(x):
        return (T.conv1d_causal(x, w, bias) * 0.3).sum()

    assert grad_check(fx, t64(rng.standard_normal((2, 6, 2)))) < 1e-4

    x_fixed = t64(rng.standard_normal((2, 6, 2)))

    def fw(wt):
        return (T.conv1d_causal(x_fixed, wt.reshape(3, 2, 4), bias) * 0.3).sum()

    assert grad_check(fw, t64(rng.standard_normal(24))) < 1e-4


def test_batched_matmul_gradients(rng):
    b = t64(rng.standard_normal((2, 3, 4, 5)))

    def f(a):
        return (T.matmul(a, b, scale=0.5) * 0.2).sum()

    assert grad_check(f, t64(rng.standard_normal((2, 3, 2, 4)))) < 1e-4


def test_no_grad_suppresses_tape(rng):
    x = t64(rng.standard_normal(4), requires_grad=True)
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad and y._parents == ()


# -- properties ---------------------------------------------------------------


@given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_softmax_rows_sum_to_one(n, m, seed):
    data = np.random.default_rng(seed).standard_normal((n, m)) * 10.0
    out = T.softmax(Tensor(data), axis=-1)
    np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(n), rtol=0, atol=1e-12)


@given(st.floats(-1e6, 1e6), st.integers(1, 4), st.integers(1, 6))
def test_mean_of_constant_is_constant(value, ndim, dim):
    shape = (dim,) * ndim
    out = Tensor(np.full(shape, value, dtype=np.float64)).mean(axis=ndim - 1)
    np.testing.assert_allclose(out.data, np.full(shape[:-1], value), rtol=1e-12, atol=1e-9)


@given(st.integers(0, 2**31 - 1))
def test_second_backward_on_fresh_graph_identical(seed):
    data = np.random.default_rng(seed).standard_normal((3, 3))
    grads = []
    for _ in range(2):
        x = Tensor(data.copy(), requires_grad=True)
        (T.tanh(x @ x) * 0.5).sum().backward()
        grads.append(x.grad.copy())
    np.testing.assert_array_equal(grads[0], grads[1])
