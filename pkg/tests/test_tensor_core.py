"""Tensor core: values, ops, broadcasting contracts, and the autodiff tape."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqfuse.errors import ConfigError, GraphError, NonFiniteError, ShapeError
from freqfuse.tensor import (BatchNorm2d, ConvSpec, OpGraph, Parameter, Tensor,
                             add, backward, batchnorm, channel_pool, channel_split,
                             concat_channels, conv2d, conv2d_transpose, embed_dilated,
                             global_avg_pool, mul, pointwise, record, reduce_mean,
                             reduce_sum, relu, sigmoid, slice_channels)
from freqfuse.verify import conv_direct_oracle


class TestTensorValue:
    def test_requires_4d(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 3)))

    def test_rejects_nonfinite(self):
        bad = np.zeros((1, 1, 2, 2))
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(NonFiniteError):
            Tensor(bad)

    def test_data_is_readonly(self, rng):
        t = Tensor(rng.standard_normal((1, 2, 3, 4)))
        with pytest.raises(ValueError):
            t.data[0, 0, 0, 0] = 1.0

    def test_defensive_copy(self):
        arr = np.ones((1, 1, 2, 2), dtype=np.float32)
        t = Tensor(arr)
        arr[0, 0, 0, 0] = 7.0
        assert t.data[0, 0, 0, 0] == 1.0

    def test_scalar_item(self):
        assert Tensor.scalar(2.5, "f64").item() == 2.5
        with pytest.raises(ShapeError):
            Tensor.zeros((1, 2, 1, 1)).item()

    def test_dtype_names(self):
        assert Tensor.zeros((1, 1, 1, 1), "f32").dtype == "f32"
        assert Tensor.zeros((1, 1, 1, 1), "f64").dtype == "f64"
        with pytest.raises(ShapeError):
            Tensor.zeros((1, 1, 1, 1), "f16")


class TestParameter:
    def test_grad_zero_initialized(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 2, 2, 2))), "w")
        assert p.grad.shape == (1, 2, 2, 2)
        assert (p.grad == 0).all()

    def test_assign_shape_guard(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 2, 2, 2))), "w")
        with pytest.raises(ShapeError):
            p.assign(np.zeros((1, 2, 2, 3), dtype=np.float32))


class TestPointwise:
    def test_sigmoid_of_zero(self):
        out = pointwise(Tensor.zeros((1, 2, 3, 3)), kind="sigmoid")
        assert np.allclose(out.data, 0.5)

    def test_relu_all_negative(self):
        out = pointwise(Tensor.full((1, 2, 3, 3), -4.0), kind="relu")
        assert (out.data == 0).all()

    def test_add_commutes(self, rng):
        a = Tensor(rng.standard_normal((2, 3, 4, 4)))
        b = Tensor(rng.standard_normal((2, 3, 4, 4)))
        assert np.array_equal(pointwise(a, b, "add").data, pointwise(b, a, "add").data)

    def test_sigmoid_open_interval(self):
        x = Tensor(np.array([-200.0, -5.0, 0.0, 5.0, 200.0]).reshape(1, 1, 1, 5), dtype="f64")
        s = sigmoid(x).data
        assert (s > 0).all() and (s < 1).all()

    def test_spatial_mask_broadcast(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        m = Tensor(rng.standard_normal((2, 1, 4, 4)))
        out = mul(x, m)
        assert np.allclose(out.data, x.data * m.data)

    def test_channel_gate_broadcast(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        gate = Tensor(rng.standard_normal((2, 3, 1, 1)))
        assert np.allclose(mul(x, gate).data, x.data * gate.data)

    def test_general_broadcast_rejected(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        bad = Tensor(rng.standard_normal((2, 3, 4, 1)))
        with pytest.raises(ShapeError):
            add(x, bad)

    def test_mixed_dtype_rejected(self, rng):
        a = Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f32")
        b = Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f64")
        with pytest.raises(ShapeError):
            add(a, b)


class TestPooling:
    def test_channel_pool_constant(self):
        x = Tensor.full((2, 5, 3, 3), 3.25)
        for mode in ("avg", "max"):
            assert np.allclose(channel_pool(x, mode).data, 3.25)

    def test_channel_pool_two_values(self):
        x = np.zeros((1, 2, 1, 1))
        x[0, 0], x[0, 1] = 1.0, 3.0
        t = Tensor(x)
        assert channel_pool(t, "avg").data[0, 0, 0, 0] == 2.0
        assert channel_pool(t, "max").data[0, 0, 0, 0] == 3.0

    def test_channel_pool_matches_reference(self, rng):
        x = Tensor(rng.standard_normal((2, 7, 4, 5)), dtype="f64")
        got = channel_pool(x, "avg").data
        for n in range(2):
            for i in range(4):
                for j in range(5):
                    ref = sum(float(x.data[n, c, i, j]) for c in range(7)) / 7
                    assert abs(got[n, 0, i, j] - ref) <= 1e-12

    def test_global_avg_pool(self, rng):
        x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 2, 2))
        assert global_avg_pool(x).data[0, 0, 0, 0] == 2.5
        y = Tensor(rng.standard_normal((2, 3, 5, 5)), dtype="f64")
        ref = y.data.sum(axis=(2, 3), keepdims=True) / 25
        assert np.abs(global_avg_pool(y).data - ref).max() <= 1e-12


class TestChannelSplit:
    def test_even_split(self, rng):
        x = Tensor(rng.standard_normal((1, 64, 2, 2)))
        a, b = channel_split(x, 0.5)
        assert a.shape[1] == 32 and b.shape[1] == 32

    def test_round_half_up(self, rng):
        x = Tensor(rng.standard_normal((1, 10, 2, 2)))
        a, b = channel_split(x, 0.25)
        assert a.shape[1] == 3 and b.shape[1] == 7

    def test_degenerate_rejected(self, rng):
        x = Tensor(rng.standard_normal((1, 4, 2, 2)))
        with pytest.raises(ShapeError):
            channel_split(x, 0.01)

    @settings(max_examples=40, deadline=None)
    @given(c=st.integers(2, 32), alpha=st.floats(0.05, 0.95))
    def test_concat_restores_bit_exactly(self, c, alpha):
        gen = np.random.default_rng(c * 1000)
        x = Tensor(gen.standard_normal((1, c, 3, 3)))
        k = int(np.floor(alpha * c + 0.5))
        if not 1 <= k <= c - 1:
            return
        a, b = channel_split(x, alpha)
        assert np.array_equal(concat_channels([a, b]).data, x.data)


class TestConv:
    def test_identity_kernel(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 6, 6)), dtype="f32")
        spec = ConvSpec.square(3, 3, 3, padding=1, has_bias=False)
        w = np.zeros(spec.weight_shape(), dtype=np.float32)
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        assert np.allclose(conv2d(x, spec, Tensor(w)).data, x.data, atol=1e-7)

    def test_1x1_doubling(self):
        x = Tensor.full((1, 1, 3, 3), 1.0)
        spec = ConvSpec.square(1, 1, 1, has_bias=False)
        out = conv2d(x, spec, Tensor.full((1, 1, 1, 1), 2.0))
        assert np.allclose(out.data, 2.0)

    def test_dilated_matches_oracle(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 5, 5)), dtype="f64")
        spec = ConvSpec.square(2, 3, 3, padding=2, dilation=2)
        w = Tensor(rng.standard_normal(spec.weight_shape()), dtype="f64")
        b = Tensor(rng.standard_normal((1, 3, 1, 1)), dtype="f64")
        got = conv2d(x, spec, w, b)
        ref = conv_direct_oracle(x, w, b, spec)
        assert got.shape == ref.shape
        assert np.abs(got.data - ref.data).max() <= 1e-12

    def test_intermediate_groups_match_oracle(self, rng):
        spec = ConvSpec(4, 6, 3, 3, padding=1, groups=2)
        x = Tensor(rng.standard_normal((2, 4, 5, 5)), dtype="f64")
        w = Tensor(rng.standard_normal(spec.weight_shape()), dtype="f64")
        b = Tensor(rng.standard_normal((1, 6, 1, 1)), dtype="f64")
        got = conv2d(x, spec, w, b)
        ref = conv_direct_oracle(x, w, b, spec)
        assert np.abs(got.data - ref.data).max() <= 1e-12

    def test_channel_mismatch_names_dimension(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 5, 5)))
        spec = ConvSpec.square(3, 3, 3, has_bias=False)
        w = Tensor(np.zeros(spec.weight_shape(), dtype=np.float32))
        with pytest.raises(ShapeError, match="channels"):
            conv2d(x, spec, w)

    def test_output_extent_guard(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 2, 2)))
        spec = ConvSpec.square(1, 1, 5, has_bias=False)
        w = Tensor(np.zeros(spec.weight_shape(), dtype=np.float32))
        with pytest.raises(ShapeError):
            conv2d(x, spec, w)

    def test_convspec_divisibility(self):
        with pytest.raises(ConfigError):
            ConvSpec(5, 4, 3, 3, groups=2)


class TestConvTranspose:
    def test_1x1_identity(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 4, 4)), dtype="f32")
        spec = ConvSpec.square(2, 2, 1, has_bias=False)
        w = np.zeros((2, 2, 1, 1), dtype=np.float32)
        w[0, 0] = w[1, 1] = 1.0
        assert np.allclose(conv2d_transpose(x, spec, Tensor(w)).data, x.data)

    def test_stride2_extent(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 8, 8)), dtype="f32")
        spec = ConvSpec.square(2, 3, 2, stride=2)
        w = Tensor(rng.standard_normal(spec.transpose_weight_shape()).astype(np.float32))
        b = Tensor(np.zeros((1, 3, 1, 1), dtype=np.float32))
        assert conv2d_transpose(x, spec, w, b).shape == (1, 3, 16, 16)

    def test_equals_gradient_of_conv_sum(self, rng):
        ci, co = 3, 4
        fwd = ConvSpec.square(ci, co, 3, stride=2, padding=1, has_bias=False)
        w = Tensor(rng.standard_normal(fwd.weight_shape()), dtype="f64")
        p = Parameter(Tensor(rng.standard_normal((1, ci, 9, 9)), dtype="f64"), "y")
        g = OpGraph()
        with record(g):
            loss = reduce_sum(conv2d(p, fwd, w))
        backward(g, loss)
        ones = Tensor(np.ones((1, co, 5, 5)), dtype="f64")
        back = ConvSpec.square(co, ci, 3, stride=2, padding=1, has_bias=False)
        assert np.abs(p.grad - conv2d_transpose(ones, back, w).data).max() <= 1e-12

    def test_adjoint_inner_product(self, rng):
        spec = ConvSpec.square(2, 5, 3, stride=1, padding=1, has_bias=False)
        w = Tensor(rng.standard_normal(spec.weight_shape()), dtype="f64")
        x = Tensor(rng.standard_normal((1, 2, 6, 6)), dtype="f64")
        y = Tensor(rng.standard_normal((1, 5, 6, 6)), dtype="f64")
        tspec = ConvSpec.square(5, 2, 3, stride=1, padding=1, has_bias=False)
        lhs = float((conv2d(x, spec, w).data * y.data).sum())
        rhs = float((x.data * conv2d_transpose(y, tspec, w).data).sum())
        assert abs(lhs - rhs) <= 1e-9


class TestEmbedDilated:
    def test_zero_insertion_pattern(self, rng):
        w = Tensor(rng.standard_normal((2, 1, 3, 3)), dtype="f64")
        out = embed_dilated(w, 5, 2).data
        assert out.shape == (2, 1, 5, 5)
        for i in range(5):
            for j in range(5):
                if i % 2 or j % 2:
                    assert out[0, 0, i, j] == 0.0
        assert np.array_equal(out[:, :, ::2, ::2], w.data)

    def test_centering(self, rng):
        w = Tensor(rng.standard_normal((1, 1, 3, 3)), dtype="f64")
        out = embed_dilated(w, 7, 1).data
        assert np.array_equal(out[:, :, 2:5, 2:5], w.data)
        assert out.sum() == pytest.approx(w.data.sum())

    def test_too_large_rejected(self, rng):
        w = Tensor(rng.standard_normal((1, 1, 5, 5)), dtype="f64")
        with pytest.raises(ShapeError):
            embed_dilated(w, 7, 2)  # effective 9 > 7


class TestBatchNorm:
    def test_eval_identity(self, rng):
        bn = BatchNorm2d(3, dtype="f64", eps=1e-7)
        bn.eval()
        x = Tensor(rng.uniform(-1, 1, (2, 3, 4, 4)), dtype="f64")
        assert np.abs(bn.forward(x).data - x.data).max() <= 1e-6

    def test_train_mode_normalizes(self, rng):
        bn = BatchNorm2d(4, dtype="f32")
        x = Tensor(rng.standard_normal((4, 4, 8, 8)) * 3 + 1, dtype="f32")
        y = bn.forward(x).data
        mean = y.mean(axis=(0, 2, 3))
        var = y.var(axis=(0, 2, 3))
        assert np.abs(mean).max() <= 1e-5
        assert np.abs(var - 1).max() <= 1e-4

    def test_running_stats_updated(self, rng):
        bn = BatchNorm2d(2, dtype="f64", momentum=0.5)
        x = Tensor(rng.standard_normal((2, 2, 4, 4)) + 10.0, dtype="f64")
        bn.forward(x)
        assert np.abs(bn.running_mean - 5.0).max() < 1.0  # moved half-way toward ~10

    def test_eps_guard(self):
        with pytest.raises(ConfigError):
            BatchNorm2d(2, eps=0.0)
        bn = BatchNorm2d(2, dtype="f64")
        x = Tensor(np.random.default_rng(0).standard_normal((1, 2, 3, 3)), dtype="f64")
        with pytest.raises(ConfigError):
            batchnorm(x, bn.gamma, bn.beta, bn.running_mean, bn.running_var, eps=-1.0)


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 2, 3, 3)), dtype="f64"), "x")
        g = OpGraph()
        with record(g):
            loss = reduce_sum(p)
        backward(g, loss)
        assert np.array_equal(p.grad, np.ones((1, 2, 3, 3)))

    def test_quadratic_gradient(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 2, 3, 3)), dtype="f64"), "x")
        g = OpGraph()
        with record(g):
            loss = reduce_sum(mul(p, p))
        backward(g, loss)
        assert np.allclose(p.grad, 2 * p.value.data)

    def test_gradients_accumulate_across_passes(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f64"), "x")
        for _ in range(2):
            g = OpGraph()
            with record(g):
                loss = reduce_sum(p)
            backward(g, loss)
        assert np.array_equal(p.grad, 2 * np.ones((1, 1, 2, 2)))

    def test_unreachable_parameter_keeps_zero_grad(self, rng):
        used = Parameter(Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f64"), "a")
        unused = Parameter(Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f64"), "b")
        g = OpGraph()
        with record(g):
            mul(unused, unused)  # watched but not reachable from the loss
            loss = reduce_sum(used)
        backward(g, loss)
        assert (unused.grad == 0).all()

    def test_non_scalar_loss_rejected(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f64"), "x")
        g = OpGraph()
        with record(g):
            y = mul(p, p)
        with pytest.raises(GraphError):
            backward(g, y)

    def test_double_replay_rejected(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f64"), "x")
        g = OpGraph()
        with record(g):
            loss = reduce_sum(p)
        backward(g, loss)
        with pytest.raises(GraphError):
            backward(g, loss)

    def test_foreign_loss_rejected(self, rng):
        g = OpGraph()
        with record(g):
            reduce_sum(Tensor(rng.standard_normal((1, 1, 2, 2))))
        other = Tensor.scalar(1.0)
        with pytest.raises(GraphError):
            backward(g, other)

    def test_mutated_graph_rejected(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f64"), "x")
        g = OpGraph()
        with record(g):
            y = mul(p, p)
            loss = reduce_sum(y)
        y._data = np.zeros((1, 1, 2, 2))  # tamper
        with pytest.raises(GraphError):
            backward(g, loss)

    def test_slice_and_concat_adjoints(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 4, 2, 2)), dtype="f64"), "x")
        r = Tensor(rng.standard_normal((1, 4, 2, 2)), dtype="f64")
        g = OpGraph()
        with record(g):
            a = slice_channels(p, 0, 2)
            b = slice_channels(p, 2, 4)
            loss = reduce_sum(mul(concat_channels([a, b]), r))
        backward(g, loss)
        assert np.allclose(p.grad, r.data)

    def test_reduce_mean_gradient(self, rng):
        p = Parameter(Tensor(rng.standard_normal((1, 2, 2, 2)), dtype="f64"), "x")
        g = OpGraph()
        with record(g):
            loss = reduce_mean(p)
        backward(g, loss)
        assert np.allclose(p.grad, 1.0 / 8)

    def test_relu_subgradient_zero_at_kink(self):
        p = Parameter(Tensor.zeros((1, 1, 2, 2), "f64"), "x")
        g = OpGraph()
        with record(g):
            loss = reduce_sum(relu(p))
        backward(g, loss)
        assert (p.grad == 0).all()


class TestDepthwiseAgainstOracle:
    # the exact (kernel, dilation, padding) combinations the low-frequency unit runs
    @pytest.mark.parametrize("k,d", [(7, 1), (3, 1), (3, 2), (3, 3)])
    def test_lfu_branch_configs(self, rng, k, d):
        c = 6
        spec = ConvSpec.square(c, c, k, padding=d * (k - 1) // 2, dilation=d, groups=c)
        x = Tensor(rng.standard_normal((2, c, 12, 12)), dtype="f64")
        w = Tensor(rng.standard_normal(spec.weight_shape()), dtype="f64")
        b = Tensor(rng.standard_normal((1, c, 1, 1)), dtype="f64")
        got = conv2d(x, spec, w, b)
        ref = conv_direct_oracle(x, w, b, spec)
        assert got.shape == x.shape
        assert np.abs(got.data - ref.data).max() <= 1e-12


class TestThreadedPasses:
    def test_independent_passes_run_in_parallel(self, rng):
        import threading

        xs = [Tensor(rng.standard_normal((1, 2, 6, 6)), dtype="f64") for _ in range(4)]
        serial = []
        for x in xs:
            p = Parameter(x, "x")
            g = OpGraph()
            with record(g):
                loss = reduce_sum(mul(relu(p), p))
            backward(g, loss)
            serial.append(p.grad.copy())

        results = [None] * 4

        def worker(i):
            p = Parameter(xs[i], "x")
            g = OpGraph()
            with record(g):
                loss = reduce_sum(mul(relu(p), p))
            backward(g, loss)
            results[i] = p.grad.copy()

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for got, want in zip(results, serial):
            assert np.array_equal(got, want)
