"""Losses, the optimizer, synthetic pairs, and the toy loop."""
import math

import numpy as np
import pytest

from freqfuse.dct import dct2d
from freqfuse.encoder import EncoderConfig
from freqfuse.errors import ConfigError, ShapeError, TrainingDivergedError
from freqfuse.tensor import OpGraph, Parameter, Tensor, backward, record
from freqfuse.training import (SGD, LossWeights, TrainConfig, build_pipeline,
                               format_report, parse_report, reconstruction_loss,
                               synthetic_pairs, total_loss, toy_train_run)


class TestReconstructionLoss:
    def test_perfect_reconstruction_is_zero(self, rng):
        ii = Tensor(rng.random((1, 1, 8, 8)), dtype="f64")
        iv = Tensor(rng.random((1, 3, 8, 8)), dtype="f64")
        assert reconstruction_loss(Tensor(ii.data), Tensor(iv.data), ii, iv).item() == 0.0

    def test_unit_offset_gives_half(self, rng):
        ii = Tensor(rng.random((1, 1, 8, 8)), dtype="f64")
        iv = Tensor(rng.random((1, 3, 8, 8)), dtype="f64")
        fi = Tensor(ii.data + 1.0)
        loss = reconstruction_loss(fi, Tensor(iv.data), ii, iv)
        assert loss.item() == pytest.approx(0.5, abs=1e-12)

    def test_shape_mismatch_rejected(self, rng):
        ii = Tensor(rng.random((1, 1, 8, 8)), dtype="f64")
        with pytest.raises(ShapeError):
            reconstruction_loss(Tensor(rng.random((1, 1, 4, 4)), dtype="f64"), ii, ii, ii)

    def test_nonnegative_and_zero_iff_exact(self, rng):
        ii = Tensor(rng.random((1, 1, 6, 6)), dtype="f64")
        iv = Tensor(rng.random((1, 3, 6, 6)), dtype="f64")
        fi = Tensor(ii.data + 1e-3)
        assert reconstruction_loss(fi, Tensor(iv.data), ii, iv).item() > 0.0


class TestTotalLoss:
    def test_lambda1_zero(self):
        assert total_loss(123.0, 0.3, LossWeights(0.0, 1.0)) == pytest.approx(0.3)

    def test_unit_weights(self):
        assert total_loss(0.2, 0.3, LossWeights(1.0, 1.0)) == pytest.approx(0.5)

    def test_nonfinite_rejected(self):
        with pytest.raises(Exception):
            total_loss(float("nan"), 0.0)

    def test_both_zero_weights_rejected(self):
        with pytest.raises(ConfigError):
            LossWeights(0.0, 0.0)

    def test_tensor_input_stays_on_graph(self, rng):
        p = Parameter(Tensor(rng.random((1, 1, 2, 2)), dtype="f64"), "x")
        g = OpGraph()
        with record(g):
            from freqfuse.tensor import reduce_mean
            loss = total_loss(reduce_mean(p), 0.25, LossWeights(2.0, 4.0))
            assert loss.item() == pytest.approx(2.0 * p.value.data.mean() + 1.0)
        backward(g, loss)
        assert (p.grad != 0).all()


class TestSgd:
    def test_zero_gradients_identity(self):
        p = Parameter(Tensor.full((1, 1, 1, 1), 3.0, "f64"), "w")
        SGD([p], lr=0.5, momentum=0.9, weight_decay=0.0).step()
        assert p.value.item() == 3.0

    def test_single_plain_step(self):
        p = Parameter(Tensor.full((1, 1, 1, 1), 1.0, "f64"), "w")
        opt = SGD([p], lr=0.1, momentum=0.0, weight_decay=0.0)
        p.grad[...] = 1.0
        opt.step()
        assert p.value.item() == pytest.approx(0.9, abs=1e-15)
        assert (p.grad == 0).all()  # gradients zeroed after the step

    def test_two_step_momentum_recursion(self):
        p = Parameter(Tensor.full((1, 1, 1, 1), 1.0, "f64"), "w")
        opt = SGD([p], lr=0.1, momentum=0.9, weight_decay=0.0)
        g1, g2 = 0.5, -0.2
        p.grad[...] = g1
        opt.step()
        v1 = g1
        w1 = 1.0 - 0.1 * v1
        assert p.value.item() == pytest.approx(w1, abs=1e-15)
        p.grad[...] = g2
        opt.step()
        v2 = 0.9 * v1 + g2
        assert p.value.item() == pytest.approx(w1 - 0.1 * v2, abs=1e-15)

    def test_weight_decay_added_to_gradient(self):
        p = Parameter(Tensor.full((1, 1, 1, 1), 2.0, "f64"), "w")
        opt = SGD([p], lr=0.1, momentum=0.0, weight_decay=0.5)
        opt.step()  # zero grad, but decay pulls toward zero: g_eff = 0.5 * 2.0
        assert p.value.item() == pytest.approx(2.0 - 0.1 * 1.0, abs=1e-15)

    def test_lr_guard(self):
        p = Parameter(Tensor.full((1, 1, 1, 1), 1.0, "f64"), "w")
        with pytest.raises(ConfigError):
            SGD([p], lr=0.0)


class TestSyntheticData:
    def test_shapes_and_range(self):
        pairs = synthetic_pairs(3, 64, seed=5)
        assert len(pairs) == 3
        for ii, iv in pairs:
            assert ii.shape == (1, 1, 64, 64) and iv.shape == (1, 3, 64, 64)
            assert ii.data.min() >= 0.0 and ii.data.max() <= 1.0
            assert iv.data.min() >= 0.0 and iv.data.max() <= 1.0

    def test_deterministic(self):
        a = synthetic_pairs(2, 32, seed=7)
        b = synthetic_pairs(2, 32, seed=7)
        for (ai, av), (bi, bv) in zip(a, b):
            assert np.array_equal(ai.data, bi.data)
            assert np.array_equal(av.data, bv.data)

    def test_frequency_asymmetry(self):
        # visible should carry a larger high-frequency energy share than infrared
        def high_share(plane):
            f = dct2d(plane)
            norm = np.add.outer(np.arange(f.shape[0]), np.arange(f.shape[1]))
            total = (f ** 2).sum()
            return ((f ** 2)[norm >= 16]).sum() / total

        for ii, iv in synthetic_pairs(4, 64, seed=11):
            vis = np.mean([high_share(iv.data[0, c].astype(np.float64)) for c in range(3)])
            infra = high_share(ii.data[0, 0].astype(np.float64))
            assert vis > infra


class TestToyTraining:
    def test_short_run_finite_and_deterministic(self):
        cfg = TrainConfig(steps=3, seed=99, image_size=32, image_count=2, batch_size=1,
                          mask_patch=1)
        enc_cfg = EncoderConfig(stem_channels=8, stages=2, group_count=2, seed=1)
        a = toy_train_run(cfg, encoder_cfg=enc_cfg)
        b = toy_train_run(cfg, encoder_cfg=enc_cfg)
        assert all(math.isfinite(v) for v in a.losses)
        assert a.losses == b.losses  # bit-identical under the same seed

    def test_different_seed_changes_losses(self):
        enc_cfg = EncoderConfig(stem_channels=8, stages=2, group_count=2, seed=1)
        a = toy_train_run(TrainConfig(steps=2, seed=1, image_size=32, image_count=2,
                                      batch_size=1, mask_patch=1), encoder_cfg=enc_cfg)
        b = toy_train_run(TrainConfig(steps=2, seed=2, image_size=32, image_count=2,
                                      batch_size=1, mask_patch=1), encoder_cfg=enc_cfg)
        assert a.losses != b.losses

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_step(self):
        cfg = TrainConfig(steps=50, seed=3, image_size=32, image_count=2, batch_size=1,
                          learning_rate=1e9, mask_patch=1)
        enc_cfg = EncoderConfig(stem_channels=8, stages=2, group_count=2, seed=1)
        with pytest.raises(TrainingDivergedError) as err:
            toy_train_run(cfg, encoder_cfg=enc_cfg)
        assert err.value.step >= 0

    def test_report_format_roundtrip(self):
        cfg = TrainConfig(steps=2, seed=5, image_size=32, image_count=2, batch_size=1,
                          mask_patch=1)
        enc_cfg = EncoderConfig(stem_channels=8, stages=2, group_count=2, seed=1)
        report = toy_train_run(cfg, encoder_cfg=enc_cfg)
        text = format_report(report)
        assert f"seed = {cfg.seed}" in text
        back = parse_report(text)
        assert back.seed == report.seed and back.steps == report.steps
        assert np.allclose(back.losses, report.losses, rtol=0, atol=0)

    def test_build_pipeline_stride_consistency(self):
        enc, cru_i, cru_v = build_pipeline(EncoderConfig(stem_channels=8, stages=2, seed=2))
        assert cru_i.cfg.cumulative_stride == enc.cumulative_stride
        assert cru_i.cfg.out_channels == 1 and cru_v.cfg.out_channels == 3
