import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from adgcrnn import tensor as T
from adgcrnn.tensor import ContractError, Parameter, ShapeError, Tensor


def brute_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for r in range(k):
                out[i, j] += a[i, r] * b[r, j]
    return out


class TestMatmul:
    def test_identity(self):
        x = np.array([[1.0, 2], [3, 4]])
        np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), Tensor(x)).data, x)

    def test_projector_selects_row(self):
        out = T.matmul(Tensor([[1.0, 0], [0, 0]]), Tensor([[5.0, 6], [7, 8]]))
        np.testing.assert_array_equal(out.data, [[5, 6], [0, 0]])

    def test_matches_triple_loop(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, brute_matmul(a, b), atol=1e-12)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_batched_broadcast_gradient(self, rng):
        a = Parameter("a", rng.standard_normal((5, 3, 4)))
        b = Parameter("b", rng.standard_normal((4, 2)))
        assert T.grad_check(lambda: T.tsum(T.tanh(T.matmul(a, b))), [a, b]) < 1e-8


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(T.softmax_rows(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])

    def test_large_logits(self):
        out = T.softmax_rows(Tensor([[1000.0, 0.0]])).data
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-12)

    def test_closed_form(self):
        np.testing.assert_allclose(T.softmax_rows(Tensor([[np.log(2.0), 0.0]])).data,
                                   [[2 / 3, 1 / 3]], atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (4, 5), elements=st.floats(-50, 50)), st.floats(-100, 100))
    def test_rows_stochastic_and_shift_invariant(self, x, c):
        p = T.softmax_rows(Tensor(x)).data
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
        shifted = x.copy()
        shifted[0] += c
        np.testing.assert_allclose(T.softmax_rows(Tensor(shifted)).data, p, atol=1e-9)


class TestElementwise:
    def test_values(self):
        np.testing.assert_array_equal(T.elementwise(Tensor([-1.0, 0.0, 2.0]), "relu").data, [0, 0, 2])
        assert T.elementwise(Tensor(0.0), "sigmoid").item() == 0.5
        assert T.elementwise(Tensor(0.0), "tanh").item() == 0.0

    def test_relu_subgradient_at_zero(self):
        p = Parameter("p", [0.0, 1.0, -1.0])
        T.backward(T.tsum(T.relu(p)))
        np.testing.assert_array_equal(p.grad, [0.0, 1.0, 0.0])

    def test_sigmoid_saturation_is_finite(self):
        out = T.sigmoid(Tensor([-1000.0, 1000.0])).data
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_unknown(self):
        with pytest.raises(ValueError):
            T.elementwise(Tensor([1.0]), "gelu")


class TestConcat:
    def test_shape_law(self):
        xs = [Tensor(np.zeros((4, 5, 1))) for _ in range(3)]
        assert T.concat_last_axis(xs).shape == (4, 5, 3)

    def test_values(self):
        np.testing.assert_array_equal(T.concat_last_axis([Tensor([1.0]), Tensor([2.0])]).data, [1, 2])

    def test_backward_all_ones(self):
        a, b = Parameter("a", np.zeros((2, 3))), Parameter("b", np.zeros((2, 1)))
        T.backward(T.tsum(T.concat_last_axis([a, b])))
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
        np.testing.assert_array_equal(b.grad, np.ones((2, 1)))

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            T.concat_last_axis([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))])

    def test_slice_recovers_operands_bit_exactly(self, rng):
        a, b = rng.standard_normal((3, 2)), rng.standard_normal((3, 4))
        c = T.concat_last_axis([Tensor(a), Tensor(b)])
        np.testing.assert_array_equal(c[:, :2].data, a)
        np.testing.assert_array_equal(c[:, 2:].data, b)
        had = T.mul(c, Tensor(np.ones((3, 6))))
        np.testing.assert_array_equal(had[:, 2:].data, b)


class TestLinear:
    def test_identity(self, rng):
        x = rng.standard_normal((2, 3))
        out = T.linear(Tensor(x), Parameter("W", np.eye(3)), Parameter("b", np.zeros(3)))
        np.testing.assert_array_equal(out.data, x)

    def test_ones(self):
        out = T.linear(Tensor(np.ones((2, 3))), Parameter("W", np.ones((3, 1))), Parameter("b", [1.0]))
        np.testing.assert_array_equal(out.data, [[4.0], [4.0]])

    def test_matches_flattened_matmul(self, rng):
        x, W, b = rng.standard_normal((2, 5, 4, 3)), rng.standard_normal((3, 6)), rng.standard_normal(6)
        flat = brute_matmul(x.reshape(-1, 3), W) + b
        out = T.linear(Tensor(x), Parameter("W", W), Parameter("b", b)).data
        np.testing.assert_allclose(out.reshape(-1, 6), flat, atol=1e-12)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            T.linear(Tensor(np.ones((2, 4))), Parameter("W", np.ones((3, 1))))


class TestBackward:
    def test_sum_gives_ones(self, rng):
        p = Parameter("p", rng.standard_normal((3, 2)))
        T.backward(T.tsum(p))
        np.testing.assert_array_equal(p.grad, np.ones((3, 2)))

    def test_square_gives_2p(self, rng):
        p = Parameter("p", rng.standard_normal(4))
        T.backward(T.tsum(T.mul(p, p)))
        np.testing.assert_allclose(p.grad, 2 * p.data)

    def test_non_scalar_root(self):
        with pytest.raises(ContractError):
            T.backward(T.mul(Parameter("p", [1.0, 2.0]), 2.0))

    def test_accumulates_until_zeroed(self):
        p = Parameter("p", [1.0, 2.0])
        T.backward(T.tsum(p))
        T.backward(T.tsum(p))
        np.testing.assert_array_equal(p.grad, [2.0, 2.0])
        p.zero_grad()
        np.testing.assert_array_equal(p.grad, [0.0, 0.0])

    def test_shared_node_visited_once(self):
        p = Parameter("p", [3.0])
        y = T.mul(p, p)
        z = T.add(y, y)  # d/dp 2p^2 = 4p
        T.backward(T.tsum(z))
        np.testing.assert_allclose(p.grad, [12.0])

    def test_deep_chain_no_recursion_limit(self):
        p = Parameter("p", [1.0])
        x = p
        for _ in range(5000):
            x = T.add(x, 0.0)
        T.backward(T.tsum(x))
        assert p.grad[0] == 1.0

    def test_no_grad_records_nothing(self):
        p = Parameter("p", [1.0])
        with T.no_grad():
            y = T.mul(p, 2.0)
        assert not y.requires_grad

    def test_straight_through(self):
        z = Parameter("z", [0.2, 0.7, 0.5])
        m = T.straight_through_step(z)
        np.testing.assert_array_equal(m.data, [0, 1, 0])
        T.backward(T.tsum(T.mul(m, Tensor([1.0, 2.0, 3.0]))))
        np.testing.assert_array_equal(z.grad, [1.0, 2.0, 3.0])


class TestGradCheck:
    def test_quadratic(self, rng):
        p = Parameter("p", rng.standard_normal((3, 3)))
        A = Tensor(rng.standard_normal((3, 3)))
        assert T.grad_check(lambda: T.tsum(T.mul(T.matmul(A, p), p)), [p]) < 1e-8

    def test_detects_wrong_gradient(self):
        p = Parameter("p", [1.0, 2.0])

        def bad_square(a):
            return T._make(a.data ** 2, (a,), lambda g: (g * a.data,))  # missing factor 2

        assert T.grad_check(lambda: T.tsum(bad_square(p)), [p]) > 0.1

    @pytest.mark.parametrize("seed", range(10))
    def test_every_op(self, seed):
        r = np.random.default_rng(seed)
        a = Parameter("a", r.standard_normal((2, 3, 4)))
        b = Parameter("b", r.standard_normal((4, 3)))
        c = Parameter("c", r.uniform(0.5, 2.0, (3,)))
        w = Parameter("w", r.standard_normal((2, 3, 3)))

        def f():
            x = T.linear(a, b, c)                                   # (2,3,3)
            x = T.concat_last_axis([T.sigmoid(x), T.tanh(w)])       # (2,3,6)
            s = T.softmax_rows(T.matmul(x, T.transpose(x)))         # (2,3,3)
            y = T.sub(T.mul(s, w), T.div(T.relu(w), c))
            y = T.add(y, T.take(T.moveaxis(y, 1, 2), (Ellipsis,)))
            y = T.reshape(y, (6, 3))
            return T.add(T.mean(T.square(y)), T.tsum(T.tabs(T.stack([y[0], y[1]], axis=0))))

        assert T.grad_check(f, [a, b, c, w], h=1e-5) < 1e-4
