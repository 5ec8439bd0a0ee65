"""Engine ops against hand-computed values and brute-force loop oracles."""

import numpy as np
import pytest

from emoadapt import tensor as T
from emoadapt.tensor import Tensor

from _helpers import (
    assert_grads_close,
    finite_diff,
    integer_array,
    naive_conv2d,
    naive_matmul,
    naive_maxpool2d,
)


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.ones((1, 1, 4, 4), dtype=np.float32))
        k = Tensor(np.ones((1, 1, 1, 1), dtype=np.float32))
        out = T.conv2d(x, k)
        np.testing.assert_array_equal(out.data, np.ones((1, 1, 4, 4), np.float32))

    def test_direct_formula_3x3(self):
        x = Tensor(np.arange(1, 10, dtype=np.float32).reshape(1, 1, 3, 3))
        k = Tensor(np.ones((1, 1, 2, 2), dtype=np.float32))
        out = T.conv2d(x, k)
        np.testing.assert_array_equal(out.data[0, 0], [[12, 16], [24, 28]])

    def test_matches_loop_oracle_exactly(self):
        rng = np.random.default_rng(11)
        x = Tensor(integer_array(rng, (1, 2, 6, 6)))
        k = Tensor(integer_array(rng, (3, 2, 3, 3)))
        out = T.conv2d(x, k)
        np.testing.assert_array_equal(out.data, naive_conv2d(x.data, k.data))

    def test_padding_matches_oracle(self):
        rng = np.random.default_rng(12)
        x = Tensor(integer_array(rng, (2, 3, 5, 4)))
        k = Tensor(integer_array(rng, (2, 3, 3, 3)))
        out = T.conv2d(x, k, padding=1)
        assert out.shape == (2, 2, 5, 4)
        np.testing.assert_array_equal(out.data, naive_conv2d(x.data, k.data, 1))

    def test_shape_errors(self):
        x = Tensor(np.ones((1, 2, 4, 4), dtype=np.float32))
        bad_channels = Tensor(np.ones((1, 3, 2, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="channel mismatch"):
            T.conv2d(x, bad_channels)
        too_big = Tensor(np.ones((1, 2, 6, 6), dtype=np.float32))
        with pytest.raises(ValueError, match="larger than padded input"):
            T.conv2d(x, too_big)
        with pytest.raises(ValueError, match="dtype mismatch"):
            T.conv2d(x, Tensor(np.ones((1, 2, 2, 2), dtype=np.float64)))
        with pytest.raises(ValueError, match="zero-sized"):
            Tensor(np.ones((1, 0, 4, 4), dtype=np.float32))


class TestMaxPool2d:
    def test_single_window(self):
        x = Tensor(np.array([[[[1, 2], [3, 4]]]], dtype=np.float32))
        assert T.maxpool2d(x).data[0, 0, 0, 0] == 4

    def test_constant_input_ties_to_top_left(self):
        x = Tensor(np.full((1, 1, 4, 4), 7.0, dtype=np.float32), requires_grad=True)
        out = T.maxpool2d(x)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 7.0, np.float32))
        loss = T.tsum(out)
        loss.backward()
        expected = np.zeros((1, 1, 4, 4), np.float32)
        expected[0, 0, ::2, ::2] = 1.0
        np.testing.assert_array_equal(x.grad, expected)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.standard_normal((1, 1, 8, 8)).astype(np.float32))
        out = T.maxpool2d(x)
        oracle, _ = naive_maxpool2d(x.data)
        np.testing.assert_array_equal(out.data, oracle)

    def test_odd_dims_rejected(self):
        with pytest.raises(ValueError, match="even spatial dims"):
            T.maxpool2d(Tensor(np.ones((1, 1, 3, 4), dtype=np.float32)))


class TestDense:
    def test_identity_weight(self):
        x = Tensor(np.array([[1.0, 2.0]], dtype=np.float32))
        w = Tensor(np.eye(2, dtype=np.float32))
        b = Tensor(np.zeros(2, dtype=np.float32))
        np.testing.assert_array_equal(T.dense(x, w, b).data, x.data)

    def test_bias_add(self):
        x = Tensor(np.array([[1.0, 2.0]], dtype=np.float32))
        w = Tensor(np.eye(2, dtype=np.float32))
        b = Tensor(np.array([10.0, 10.0], dtype=np.float32))
        np.testing.assert_array_equal(T.dense(x, w, b).data, [[11.0, 12.0]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(14)
        x = Tensor(integer_array(rng, (3, 5)))
        w = Tensor(integer_array(rng, (5, 4)))
        b = Tensor(integer_array(rng, (4,)))
        out = T.dense(x, w, b)
        np.testing.assert_array_equal(out.data, naive_matmul(x.data, w.data) + b.data)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            T.dense(
                Tensor(np.ones((2, 3), np.float32)),
                Tensor(np.ones((4, 2), np.float32)),
                Tensor(np.ones(2, np.float32)),
            )


class TestElementwise:
    def test_relu(self):
        out = T.relu(Tensor(np.array([-1.0, 0.0, 2.0], dtype=np.float32)))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_sigmoid_at_zero(self):
        assert T.sigmoid(Tensor(np.zeros(1, np.float32))).data[0] == 0.5

    def test_softmax_symmetry(self):
        out = T.softmax(Tensor(np.zeros((1, 4), np.float32)))
        np.testing.assert_allclose(out.data, 0.25, rtol=0, atol=0)

    def test_softmax_rows_on_simplex(self):
        rng = np.random.default_rng(15)
        x = Tensor(rng.standard_normal((64, 4)).astype(np.float32) * 10)
        y = T.softmax(x).data
        assert np.all(y >= 0)
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-6)

    def test_dropout_deterministic_and_identity_when_eval(self):
        x = Tensor(np.ones((4, 8), np.float32))
        a = T.dropout(x, 0.5, seed=99, training=True)
        b = T.dropout(x, 0.5, seed=99, training=True)
        np.testing.assert_array_equal(a.data, b.data)
        assert T.dropout(x, 0.5, seed=99, training=False) is x
        c = T.dropout(x, 0.5, seed=100, training=True)
        assert not np.array_equal(a.data, c.data)

    def test_dropout_inverted_scaling(self):
        x = Tensor(np.ones(20000, np.float32))
        out = T.dropout(x, 0.25, seed=7, training=True)
        kept = out.data[out.data > 0]
        np.testing.assert_allclose(kept, 1.0 / 0.75, rtol=1e-6)
        # keep count near (1 - rate) * n
        assert abs(kept.size / 20000 - 0.75) < 0.02

    def test_dropout_rate_bounds(self):
        x = Tensor(np.ones(4, np.float32))
        with pytest.raises(ValueError, match="rate"):
            T.dropout(x, 1.0, seed=0, training=True)
        with pytest.raises(ValueError, match="rate"):
            T.dropout(x, -0.1, seed=0, training=True)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        w = Tensor(np.array([3.0, -1.0, 2.0], dtype=np.float64), requires_grad=True)
        T.tsum(w).backward()
        np.testing.assert_array_equal(w.grad, np.ones(3))

    def test_sum_of_squares(self):
        w = Tensor(np.array([1.0, 2.0]), requires_grad=True, dtype=np.float64)
        T.tsum(T.mul(w, w)).backward()
        np.testing.assert_allclose(w.grad, [2.0, 4.0], rtol=0, atol=0)

    def test_non_scalar_rejected(self):
        w = Tensor(np.ones(3, np.float32), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            w.backward()

    def test_reused_node_accumulates(self):
        # diamond: y = a*a + a*a, dy/da = 4a
        a = Tensor(np.array([1.5, -2.0]), requires_grad=True, dtype=np.float64)
        p = T.mul(a, a)
        T.tsum(T.add(p, p)).backward()
        np.testing.assert_allclose(a.grad, 4 * a.data, rtol=1e-12)

    def test_no_grad_leaves_untouched(self):
        a = Tensor(np.ones(2, np.float64))
        b = Tensor(np.ones(2, np.float64), requires_grad=True)
        T.tsum(T.mul(a, b)).backward()
        assert a.grad is None
        np.testing.assert_array_equal(b.grad, np.ones(2))


class TestDeterminismAndFiniteness:
    def test_forward_bit_identical_across_runs(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal((2, 2, 6, 6)).astype(np.float32)
        k = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)

        def run():
            out = T.conv2d(Tensor(x.copy()), Tensor(k.copy()), padding=1)
            out = T.relu(out)
            out = T.maxpool2d(out)
            return T.dropout(
                T.reshape(out, (2, -1)), 0.5, seed=5, training=True
            ).data.tobytes()

        assert run() == run()

    def test_forward_outputs_finite(self):
        rng = np.random.default_rng(17)
        x = Tensor(rng.standard_normal((4, 1, 8, 8)).astype(np.float32))
        k = Tensor(rng.standard_normal((2, 1, 3, 3)).astype(np.float32))
        h = T.maxpool2d(T.relu(T.conv2d(x, k)))
        h = T.softmax(T.reshape(h, (4, -1)))
        assert np.all(np.isfinite(h.data))


def _op_gradcheck_cases():
    rng = np.random.default_rng(21)

    def r(shape, lo=-1.0, hi=1.0):
        return rng.uniform(lo, hi, size=shape)

    # (name, arrays, graph builder over tensors)
    yield "add", [r((3, 4)), r((3, 4))], lambda a, b: T.add(a, b)
    yield "sub", [r((3, 4)), r((3, 4))], lambda a, b: T.sub(a, b)
    yield "mul", [r((3, 4)), r((3, 4))], lambda a, b: T.mul(a, b)
    yield "scale", [r((3, 4))], lambda a: T.scale(a, -2.5)
    yield "relu", [r((5, 5), 0.05, 1.0) * rng.choice([-1, 1], (5, 5))], T.relu
    yield "sigmoid", [r((3, 4), -3, 3)], T.sigmoid
    yield "log", [r((3, 4), 0.1, 2.0)], T.log
    yield "abs", [r((4, 4), 0.05, 1.0) * rng.choice([-1, 1], (4, 4))], T.absolute
    yield "clamp_min", [r((4, 4), -1, 1)], lambda a: T.clamp_min(a, 0.2)
    yield "softmax", [r((4, 5), -2, 2)], T.softmax
    yield "mean", [r((3, 4))], T.mean
    yield "reshape", [r((2, 6))], lambda a: T.reshape(a, (3, 4))
    yield "dropout", [r((4, 6))], lambda a: T.dropout(a, 0.4, seed=3, training=True)
    yield "dense", [r((3, 4)), r((4, 2)), r((2,))], T.dense
    yield "conv2d", [r((2, 2, 5, 5)), r((3, 2, 3, 3))], lambda x, k: T.conv2d(x, k, 1)
    yield "maxpool2d", [r((2, 2, 6, 6))], T.maxpool2d


@pytest.mark.parametrize(
    "name,arrays,builder", list(_op_gradcheck_cases()), ids=lambda v: v if isinstance(v, str) else ""
)
def test_op_gradients_match_finite_differences(name, arrays, builder):
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]

    def scalar():
        tensors = [Tensor(a) for a in arrays]
        # weight the output so the gradient is not a trivial all-ones pattern
        out = builder(*tensors)
        w = np.cos(np.arange(out.size, dtype=np.float64)).reshape(out.shape)
        return float((out.data * w).sum())

    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = builder(*leaves)
    w = np.cos(np.arange(out.size, dtype=np.float64)).reshape(out.shape)
    T.tsum(T.mul(out, Tensor(w))).backward()

    numeric = finite_diff(scalar, arrays)
    for leaf, num in zip(leaves, numeric):
        assert_grads_close(leaf.grad, num, label=name)
