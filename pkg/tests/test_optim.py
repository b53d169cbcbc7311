import numpy as np
import pytest

from tscondense.optim import SGD, Adam, MissingGradError, ParamSet
from tscondense.tensor import Tensor


def param(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class TestParamSet:
    def test_unique_names_enforced(self):
        ps = ParamSet({"w": param([1.0])})
        with pytest.raises(ValueError, match="duplicate"):
            ps.add("w", param([2.0]))

    def test_requires_grad_enforced(self):
        with pytest.raises(ValueError, match="require grad"):
            ParamSet({"w": Tensor(np.zeros(2))})

    def test_total_parameters(self):
        ps = ParamSet({"a": param(np.zeros((2, 3))), "b": param(np.zeros(5))})
        assert ps.total_parameters == 11

    def test_subset_by_prefix(self):
        ps = ParamSet({"embed.w": param([1.0]), "head.w": param([2.0])})
        assert ps.subset("embed.").names() == ["embed.w"]

    def test_copy_and_load_round_trip(self):
        ps = ParamSet({"w": param([1.0, 2.0])})
        snapshot = ps.copy_values()
        ps["w"].data[...] = 9.0
        ps.load_values(snapshot)
        np.testing.assert_array_equal(ps["w"].data, [1.0, 2.0])


class TestAdam:
    def test_zero_grad_leaves_params_unchanged(self):
        p = param([1.0, -2.0])
        opt = Adam(ParamSet({"p": p}), learning_rate=0.1)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_matches_hand_evaluated_update(self):
        # hand evaluation at t=1: m=(1-b1)g, v=(1-b2)g^2, bias-corrected
        lr, b1, b2, eps, g = 0.1, 0.9, 0.999, 1e-8, 1.0
        m_hat = (1 - b1) * g / (1 - b1)
        v_hat = (1 - b2) * g * g / (1 - b2)
        expected = -lr * m_hat / (np.sqrt(v_hat) + eps)
        p = param([0.0])
        opt = Adam(ParamSet({"p": p}), learning_rate=lr, beta1=b1, beta2=b2, eps=eps)
        p.grad = np.array([g])
        opt.step()
        np.testing.assert_allclose(p.data, [expected], rtol=0, atol=1e-15)
        assert abs(p.data[0] + lr) < 1e-6  # update magnitude ~ lr on the first step

    def test_identical_params_get_identical_updates(self, rng):
        g = rng.standard_normal(4)
        a, b = param(np.ones(4)), param(np.ones(4))
        opt = Adam(ParamSet({"a": a, "b": b}))
        a.grad, b.grad = g.copy(), g.copy()
        opt.step()
        np.testing.assert_array_equal(a.data, b.data)

    def test_missing_grad_rejected(self):
        p = param([1.0])
        opt = Adam(ParamSet({"p": p}))
        with pytest.raises(MissingGradError, match="'p'"):
            opt.step()

    def test_step_counter_and_moment_shapes(self):
        p = param(np.zeros((2, 3)))
        opt = Adam(ParamSet({"p": p}))
        p.grad = np.ones((2, 3))
        opt.step()
        opt.step()
        assert opt.state.step_count == 2
        assert opt.state.m["p"].shape == (2, 3)
        assert opt.state.v["p"].shape == (2, 3)


class TestSGD:
    def test_basic_update(self):
        p = param([1.0])
        opt = SGD(ParamSet({"p": p}), learning_rate=0.5)
        p.grad = np.array([2.0])
        opt.step()
        np.testing.assert_array_equal(p.data, [0.0])

    def test_zero_learning_rate(self):
        p = param([3.0])
        opt = SGD(ParamSet({"p": p}), learning_rate=0.0)
        p.grad = np.array([5.0])
        opt.step()
        np.testing.assert_array_equal(p.data, [3.0])

    def test_missing_grad_rejected(self):
        with pytest.raises(MissingGradError):
            SGD(ParamSet({"p": param([1.0])}), 0.1).step()

    def test_first_step_direction_agrees_with_adam(self, rng):
        # on a fresh state both move every coordinate against its gradient sign
        for _ in range(20):
            g = rng.standard_normal(6)
            g[np.abs(g) < 1e-3] = 1.0
            pa, ps = param(np.zeros(6)), param(np.zeros(6))
            adam, sgd = Adam(ParamSet({"p": pa})), SGD(ParamSet({"p": ps}), 0.1)
            pa.grad, ps.grad = g.copy(), g.copy()
            adam.step()
            sgd.step()
            np.testing.assert_array_equal(np.sign(pa.data), np.sign(ps.data))
