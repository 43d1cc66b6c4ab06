import numpy as np
import pytest

from shrinknet.tensor import Tensor
from shrinknet.model import InputPath, Model, ModelConfig, softmax
from shrinknet.flops import count_flops, flops_conv2d, flops_dense, flops_lstm


def tiny_cfg(**kw):
    base = dict(length=16, num_classes=3, block_channels=[8, 16],
                block_downsample=[True, False])
    base.update(kw)
    return ModelConfig(**base)


class TestConfig:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ModelConfig(block_channels=[8], block_downsample=[True, False]).validate()

    def test_too_short(self):
        with pytest.raises(ValueError):
            ModelConfig(length=4).validate()

    def test_dict_roundtrip(self):
        cfg = ModelConfig(num_classes=11, variant="single", thresholding="soft")
        back = ModelConfig.from_dict(cfg.to_dict())
        assert back == cfg


class TestFeatureExtract:
    def test_default_shapes(self):
        path = InputPath(ModelConfig(), np.random.default_rng(0))
        for L in (128, 1024):
            x = Tensor(np.random.default_rng(1).normal(size=(2, L, 2)))
            assert path.feature_extract(x).shape == (2, L, 4, 5)

    def test_too_short_input(self):
        path = InputPath(ModelConfig(), np.random.default_rng(0))
        with pytest.raises(ValueError, match="length"):
            path.feature_extract(Tensor(np.zeros((1, 4, 2))))

    def test_all_zero_weights_zero_features(self):
        path = InputPath(ModelConfig(), np.random.default_rng(0))
        for _, p in (path.lstm.named_params("l") + path.conv_h.named_params("h")
                     + path.conv_v.named_params("v")):
            p.data[:] = 0
        x = Tensor(np.random.default_rng(2).normal(size=(1, 128, 2)))
        np.testing.assert_allclose(path.feature_extract(x).data, 0.0)


class TestForward:
    def test_probabilities_sum_to_one(self):
        m = Model(tiny_cfg(), seed=0)
        rng = np.random.default_rng(3)
        logits, probs = m(rng.normal(size=(4, 16, 2)), rng.normal(size=(4, 16, 2)),
                          train=True)
        assert logits.shape == (4, 3) and probs.shape == (4, 3)
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-6)
        np.testing.assert_array_equal(np.argmax(probs.data, axis=1),
                                      np.argmax(logits.data, axis=1))

    def test_single_sample_shape(self):
        m = Model(ModelConfig(num_classes=11), seed=0)
        rng = np.random.default_rng(4)
        logits, probs = m(rng.normal(size=(128, 2)), rng.normal(size=(128, 2)),
                          train=True)
        assert logits.shape == (11,) and probs.shape == (11,)

    @pytest.mark.parametrize("L", [16, 64, 128])
    def test_shape_contract_over_lengths(self, L):
        m = Model(ModelConfig(num_classes=5), seed=0)
        rng = np.random.default_rng(5)
        logits, _ = m(rng.normal(size=(2, L, 2)), rng.normal(size=(2, L, 2)),
                      train=True)
        assert logits.shape == (2, 5)

    def test_path_independence(self):
        rng = np.random.default_rng(6)
        iq = Tensor(rng.normal(size=(3, 16, 2)))
        ap = Tensor(rng.normal(size=(3, 16, 2)))
        m = Model(tiny_cfg(), seed=1)
        f_iq_before = m.iq_path(iq, train=True).data.copy()
        for _, p in m.ap_path.named_params("ap"):
            p.data[...] = 0
        f_iq_after = m.iq_path(iq, train=True).data
        assert f_iq_before.tobytes() == f_iq_after.tobytes()
        f_ap = m.ap_path(ap, train=True).data
        # zeroed path collapses to a constant per feature
        assert np.allclose(f_ap, f_ap[0], atol=1e-6)

    def test_softmax_shift_invariance(self):
        x = np.array([[1.0, 2.0, 3.0]])
        a = softmax(Tensor(x)).data
        b = softmax(Tensor(x + 100)).data
        np.testing.assert_allclose(a, b, atol=1e-6)


class TestParamCounts:
    def test_every_tensor_named_once(self):
        m = Model(ModelConfig(), seed=0)
        names = [n for n, _ in m.named_params()]
        assert len(names) == len(set(names))
        ids = [id(p) for _, p in m.named_params()]
        assert len(ids) == len(set(ids))

    def test_classifier_count(self):
        m = Model(ModelConfig(num_classes=11), seed=0)
        assert m.classifier.param_count == 32 * 11 + 11 == 363

    def test_lstm_subtotal(self):
        m = Model(ModelConfig(), seed=0)
        assert m.param_subtotals()["iq.lstm"] == 112

    def test_default_total_in_target_band(self):
        m = Model(ModelConfig(num_classes=24), seed=0)
        assert 20_000 <= m.count_params() <= 32_000

    def test_single_variant_reduction_5_to_15_pct(self):
        dual = Model(ModelConfig(num_classes=24), seed=0).count_params()
        single = Model(ModelConfig(num_classes=24, variant="single"), seed=0).count_params()
        assert single < dual
        assert 0.05 <= (dual - single) / dual <= 0.15


class TestFlops:
    def test_dense_example(self):
        assert flops_dense(16, 24) == 792

    def test_one_by_one_conv_example(self):
        L, W = 7, 3
        assert flops_conv2d(L, W, 1, 1, 1, 1) == 3 * L * W

    def test_lstm_per_step_formula(self):
        assert flops_lstm(1, 2, 4) == 2 * 4 * 4 * 6 + 16 + 32

    def test_scaling_ratio(self):
        cfg = ModelConfig(num_classes=24)
        _, f128 = count_flops(cfg, 128)
        _, f1024 = count_flops(cfg, 1024)
        assert 7.5 <= f1024 / f128 <= 8.5

    def test_single_variant_flops_within_5_pct(self):
        dual = count_flops(ModelConfig(num_classes=24), 128)[1]
        single = count_flops(ModelConfig(num_classes=24, variant="single"), 128)[1]
        assert single <= dual
        assert (dual - single) / dual < 0.05

    def test_table_totals_consistent(self):
        table, total = count_flops(ModelConfig(), 128)
        assert total == sum(n for _, n in table)
        assert all(n > 0 for _, n in table)
