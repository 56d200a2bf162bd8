import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resp3d.analysis import Instrumented
from resp3d.tensor import Tensor, backward, no_grad, ops, precision, zero_grad


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad, dtype=np.float64)


class TestTensor:
    def test_default_precision_is_float32(self):
        assert Tensor([1.0, 2.0]).dtype == np.float32

    def test_precision_context(self):
        with precision("float64"):
            assert Tensor([1.0]).dtype == np.float64
        assert Tensor([1.0]).dtype == np.float32

    def test_rejects_unsupported_precision(self):
        with pytest.raises(ValueError):
            with precision("float16"):
                pass

    def test_size_matches_shape(self):
        x = Tensor(np.zeros((2, 3, 4)))
        assert x.size == math.prod(x.shape) == x.data.size

    def test_no_grad_records_no_graph(self):
        x = t64([1.0, 2.0])
        with no_grad():
            y = ops.mul(x, x)
        assert y._parents == () and not y.requires_grad


class TestBackward:
    def test_sum_gives_ones(self):
        x = t64(np.random.default_rng(0).standard_normal((2, 3)))
        backward(ops.sum_(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_square_gives_2x(self):
        x = t64([1.5, -2.0, 3.0])
        backward(ops.sum_(ops.mul(x, x)))
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_twice_doubles_gradients(self):
        x = t64([1.0, 2.0])
        loss = ops.sum_(ops.mul(x, x))
        backward(loss)
        first = x.grad.copy()
        backward(loss)
        np.testing.assert_allclose(x.grad, 2 * first)
        zero_grad([x])
        assert x.grad is None

    def test_rejects_non_scalar(self):
        x = t64([1.0, 2.0])
        with pytest.raises(ValueError, match="scalar"):
            backward(ops.mul(x, x))

    def test_shared_node_visited_once(self):
        # y feeds the loss twice; reverse topological order must still give d/dx (y + y) = 2
        x = t64([3.0])
        y = ops.mul(x, t64([1.0], grad=False))
        backward(ops.sum_(ops.add(y, y)))
        np.testing.assert_allclose(x.grad, [2.0])

    def test_deep_chain_is_iterative(self):
        x = t64([1.0])
        y = x
        for _ in range(3000):
            y = ops.add(y, t64([0.0], grad=False))
        backward(ops.sum_(y))
        assert x.grad[0] == 1.0


class TestElementwise:
    def test_sigmoid_zero(self):
        assert ops.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_sigmoid_is_stable(self):
        out = ops.sigmoid(Tensor(np.array([-1000.0, 1000.0]), dtype=np.float64)).data
        assert np.all(np.isfinite(out)) and out[0] == 0.0 and out[1] == 1.0

    def test_abs_value_and_gradient(self):
        x = t64([-3.0])
        y = ops.abs_(x)
        backward(ops.sum_(y))
        assert y.data[0] == 3.0 and x.grad[0] == -1.0

    def test_abs_subgradient_at_zero(self):
        x = t64([0.0])
        backward(ops.sum_(ops.abs_(x)))
        assert x.grad[0] == 0.0

    def test_broadcast_mask_shape(self):
        out = ops.mul(Tensor(np.ones((1, 3, 4, 1, 1))), Tensor(np.ones((1, 3, 4, 5, 5))))
        assert out.shape == (1, 3, 4, 5, 5)

    def test_broadcast_gradient_reduces(self):
        m = t64(np.full((1, 2, 1, 1, 1), 2.0))
        f = t64(np.ones((1, 2, 3, 2, 2)))
        backward(ops.sum_(ops.mul(m, f)))
        np.testing.assert_allclose(m.grad, np.full((1, 2, 1, 1, 1), 12.0))

    def test_incompatible_broadcast_rejected(self):
        with pytest.raises(ValueError, match="broadcast"):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "abs", "relu", "sigmoid"])
    def test_dispatch(self, op):
        a = Tensor(np.array([-1.0, 2.0]))
        b = Tensor(np.array([3.0, 4.0]))
        out = ops.elementwise(op, a, b) if op in ("add", "sub", "mul") else ops.elementwise(op, a)
        assert out.shape == (2,)


class TestPooling:
    def test_constant(self):
        out = ops.global_avg_pool(Tensor(np.full((2, 3, 4, 5, 5), 7.0)))
        assert out.shape == (2, 3, 1, 1, 1)
        np.testing.assert_allclose(out.data, 7.0)

    def test_mean_of_grid(self):
        x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 1, 2, 2))
        assert ops.global_avg_pool(x).data.item() == 2.5

    def test_gradient_is_uniform(self):
        x = t64(np.random.default_rng(0).standard_normal((1, 2, 3, 4, 5)))
        backward(ops.sum_(ops.global_avg_pool(x)))
        np.testing.assert_allclose(x.grad, 1.0 / 60)

    def test_attention_alias(self):
        x = Tensor(np.random.default_rng(1).standard_normal((2, 6, 2, 3, 3)))
        np.testing.assert_array_equal(ops.pool_attention_variant(x).data, ops.global_avg_pool(x).data)


class TestConcat:
    def test_three_parts_width(self):
        parts = [Tensor(np.zeros((1, 64, 2, 3, 3))) for _ in range(3)]
        assert ops.concat_channels(parts).shape[1] == 192

    def test_single_part_identity(self):
        x = Tensor(np.random.default_rng(0).standard_normal((1, 2, 2, 2, 2)))
        np.testing.assert_array_equal(ops.concat_channels([x]).data, x.data)

    def test_time_mismatch_names_axis(self):
        with pytest.raises(ValueError, match="axis T: 32 vs 31"):
            ops.concat_channels([Tensor(np.zeros((1, 1, 32, 2, 2))), Tensor(np.zeros((1, 1, 31, 2, 2)))])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 4), min_size=1, max_size=4))
    def test_split_inverts_concat(self, sizes):
        rng = np.random.default_rng(len(sizes))
        parts = [Tensor(rng.standard_normal((2, c, 2, 2, 2))) for c in sizes]
        back = ops.split_channels(ops.concat_channels(parts), sizes)
        for a, b in zip(parts, back):
            np.testing.assert_array_equal(a.data, b.data)


class TestConv:
    def test_zero_kernel(self):
        x = Tensor(np.random.default_rng(0).standard_normal((1, 1, 2, 4, 4)))
        out = ops.conv_spatial(x, Tensor(np.zeros((1, 1, 1, 3, 3))), Tensor(np.zeros(1)), 1, 1)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_spatial_identity(self):
        x = Tensor(np.random.default_rng(0).standard_normal((1, 1, 2, 4, 4)))
        out = ops.conv_spatial(x, Tensor(np.ones((1, 1, 1, 1, 1))), None, 1, 0)
        np.testing.assert_array_equal(out.data, x.data)

    def test_spatial_center_sum(self, f64):
        x = Tensor(np.arange(1.0, 10.0).reshape(1, 1, 1, 3, 3))
        out = ops.conv_spatial(x, Tensor(np.ones((1, 1, 1, 3, 3))), None, 1, 1)
        assert out.data[0, 0, 0, 1, 1] == 45.0

    def test_temporal_identity(self):
        x = Tensor(np.random.default_rng(0).standard_normal((1, 1, 5, 2, 2)))
        w = Tensor(np.array([0.0, 1.0, 0.0]).reshape(1, 1, 3, 1, 1))
        np.testing.assert_array_equal(ops.conv_temporal(x, w, None, 1).data, x.data)

    def test_temporal_difference(self, f64):
        x = Tensor(np.array([1.0, 2.0, 4.0]).reshape(1, 1, 3, 1, 1))
        w = Tensor(np.array([-1.0, 0.0, 1.0]).reshape(1, 1, 3, 1, 1))
        np.testing.assert_array_equal(ops.conv_temporal(x, w, None, 1).data.reshape(-1), [2.0, 3.0, -2.0])

    def test_temporal_zero_kernel(self):
        x = Tensor(np.ones((1, 2, 3, 2, 2)))
        out = ops.conv_temporal(x, Tensor(np.zeros((2, 2, 3, 1, 1))), None, 1)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_pointwise_identity(self):
        x = Tensor(np.random.default_rng(0).standard_normal((1, 3, 2, 4, 4)))
        np.testing.assert_array_equal(ops.conv_pointwise(x, Tensor(np.eye(3)), Tensor(np.zeros(3))).data, x.data)

    def test_pointwise_dot(self):
        out = ops.conv_pointwise(Tensor(np.ones((1, 2, 1, 3, 3))), Tensor(np.array([[2.0, 3.0]])), None)
        np.testing.assert_array_equal(out.data, 5.0)

    def test_pointwise_stride(self):
        out = ops.conv_pointwise(Tensor(np.ones((1, 2, 1, 4, 4))), Tensor(np.ones((1, 2))), None, 2)
        assert out.shape[3:] == (2, 2)

    def test_channel_mismatch_names_axis(self):
        with pytest.raises(ValueError, match="axis C"):
            ops.conv_spatial(Tensor(np.ones((1, 2, 1, 4, 4))), Tensor(np.ones((1, 3, 1, 3, 3))), None, 1, 1)

    def test_wrong_kernel_extent_names_axis(self):
        with pytest.raises(ValueError, match="axis T"):
            ops.conv_spatial(Tensor(np.ones((1, 1, 1, 4, 4))), Tensor(np.ones((1, 1, 3, 3, 3))), None, 1, 1)

    def test_pointwise_stride_guard(self):
        with pytest.raises(ValueError):
            ops.conv_pointwise(Tensor(np.ones((1, 1, 1, 4, 4))), Tensor(np.ones((1, 1))), None, 3)

    @settings(max_examples=40, deadline=None)
    @given(H=st.integers(1, 9), k=st.sampled_from([1, 3, 5, 7]), stride=st.sampled_from([1, 2]),
           same=st.booleans())
    def test_spatial_shape_rule(self, H, k, stride, same):
        pad = (k - 1) // 2 if same else 0
        if H + 2 * pad < k:
            return
        out = ops.conv_spatial(Tensor(np.ones((1, 1, 2, H, H))), Tensor(np.ones((1, 1, 1, k, k))), None, stride, pad)
        expected = (H + 2 * pad - k) // stride + 1
        assert out.shape == (1, 1, 2, expected, expected)

    @settings(max_examples=20, deadline=None)
    @given(T=st.integers(1, 8), k=st.sampled_from([1, 3, 5]))
    def test_temporal_same_padding_keeps_length(self, T, k):
        out = ops.conv_temporal(Tensor(np.ones((1, 1, T, 2, 2))), Tensor(np.ones((1, 1, k, 1, 1))), None, (k - 1) // 2)
        assert out.shape[2] == T


class TestConvOracle:
    """im2col + BLAS against the nested-loop reference at 64-bit."""

    @pytest.mark.parametrize("case", range(10))
    def test_spatial(self, backend, case):
        rng = np.random.default_rng(case)
        N, C, T, H, W = (int(rng.integers(1, m + 1)) for m in (2, 3, 4, 6, 6))
        co, k = int(rng.integers(1, 4)), int(rng.choice([1, 3]))
        s, pad = int(rng.integers(1, 3)), (k - 1) // 2
        x, w, b = rng.standard_normal((N, C, T, H, W)), rng.standard_normal((co, C, 1, k, k)), rng.standard_normal(co)
        with precision("float64"):
            got = ops.conv_spatial(Tensor(x), Tensor(w), Tensor(b), s, pad).data
        ref = Instrumented().conv(x, w, b, s, (0, pad, pad))
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("case", range(10))
    def test_temporal(self, backend, case):
        rng = np.random.default_rng(100 + case)
        N, C, T, H, W = (int(rng.integers(1, m + 1)) for m in (2, 3, 4, 6, 6))
        co = int(rng.integers(1, 4))
        x, w, b = rng.standard_normal((N, C, T, H, W)), rng.standard_normal((co, C, 3, 1, 1)), rng.standard_normal(co)
        with precision("float64"):
            got = ops.conv_temporal(Tensor(x), Tensor(w), Tensor(b), 1).data
        np.testing.assert_allclose(got, Instrumented().conv(x, w, b, 1, (1, 0, 0)), rtol=0, atol=1e-12)


class TestLinear:
    def test_identity(self):
        x = Tensor(np.array([[1.0, -2.0]]))
        np.testing.assert_array_equal(ops.linear(x, Tensor(np.eye(2)), Tensor(np.zeros(2))).data, x.data)

    def test_bias_only(self):
        out = ops.linear(Tensor(np.array([[5.0, 6.0]])), Tensor(np.zeros((2, 2))), Tensor(np.array([1.0, 2.0])))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0]])

    def test_hand_matmul(self):
        out = ops.linear(Tensor(np.array([[1.0, 1.0]])), Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])), None)
        np.testing.assert_array_equal(out.data, [[3.0, 7.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ops.linear(Tensor(np.ones((1, 3))), Tensor(np.ones((2, 2))), None)


class TestBatchNorm:
    def _bn(self, x, training=True, rm=None, rv=None):
        C = x.shape[1]
        rm = np.zeros(C) if rm is None else rm
        rv = np.ones(C) if rv is None else rv
        return ops.batch_norm(x, Tensor(np.ones(C)), Tensor(np.zeros(C)), rm, rv, training), rm, rv

    def test_standardized_input_passes_through(self, f64):
        v = np.random.default_rng(0).standard_normal((4, 2, 3, 4, 4))
        v = (v - v.mean(axis=(0, 2, 3, 4), keepdims=True)) / v.std(axis=(0, 2, 3, 4), keepdims=True)
        out, _, _ = self._bn(Tensor(v))
        # the only change is the epsilon shrink 1/sqrt(1 + eps)
        np.testing.assert_allclose(out.data, v / np.sqrt(1 + 1e-5), rtol=0, atol=1e-12)
        assert np.abs(out.data - v).max() <= 1e-5 * np.abs(v).max()

    def test_constant_channel_gives_zero(self):
        out, _, _ = self._bn(Tensor(np.full((2, 1, 2, 3, 3), 4.0)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_train_output_statistics(self, f64):
        x = Tensor(np.random.default_rng(3).normal(5.0, 3.0, (4, 3, 2, 5, 5)))
        out, _, _ = self._bn(x)
        assert np.abs(out.data.mean(axis=(0, 2, 3, 4))).max() <= 1e-6
        assert np.abs(out.data.var(axis=(0, 2, 3, 4)) - 1).max() <= 1e-4

    def test_running_stats_update(self, f64):
        x = Tensor(np.random.default_rng(3).normal(2.0, 1.0, (4, 1, 2, 5, 5)))
        _, rm, rv = self._bn(x)
        n = x.data.size
        assert rm[0] == pytest.approx(0.1 * x.data.mean())
        assert rv[0] == pytest.approx(0.9 + 0.1 * x.data.var() * n / (n - 1))

    def test_eval_uses_running_stats(self, f64):
        x = Tensor(np.full((1, 1, 1, 2, 2), 3.0))
        out, _, _ = self._bn(x, training=False, rm=np.array([1.0]), rv=np.array([4.0]))
        np.testing.assert_allclose(out.data, 2.0 / np.sqrt(4.0 + 1e-5))

    def test_train_needs_two_values(self):
        with pytest.raises(ValueError):
            self._bn(Tensor(np.ones((1, 1, 1, 1, 1))))


class TestCrossEntropy:
    def test_uniform(self):
        loss = ops.softmax_cross_entropy(Tensor(np.zeros((3, 101)), dtype=np.float64), [0, 5, 100])
        assert loss.data.item() == pytest.approx(math.log(101), abs=1e-12)
        assert loss.data.item() == pytest.approx(4.6151, abs=1e-4)

    def test_confident(self):
        logits = np.zeros((1, 4))
        logits[0, 2] = 1000.0
        assert ops.softmax_cross_entropy(Tensor(logits, dtype=np.float64), [2]).data.item() == pytest.approx(0.0, abs=1e-12)

    def test_gradient_formula(self):
        z = t64(np.random.default_rng(0).standard_normal((2, 5)))
        backward(ops.softmax_cross_entropy(z, [1, 3]))
        onehot = np.eye(5)[[1, 3]]
        np.testing.assert_allclose(z.grad, (ops.softmax(z.data) - onehot) / 2, atol=1e-15)

    def test_label_range(self):
        with pytest.raises(ValueError):
            ops.softmax_cross_entropy(Tensor(np.zeros((1, 3))), [3])
