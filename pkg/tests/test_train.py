import numpy as np
import pytest
from hypothesis import given, strategies as st

from hypercert.errors import DataError, DivergenceError
from hypercert.hypergraph import FeatureSet
from hypercert.models import forward, predict, prepare
from hypercert.synth import Sample
from hypercert.train import (SGD, TrainConfig, batch_gradient, dataset_margin_loss, margin_loss,
                             softmax_ce, split_indices, train_model, write_log)
from hypercert.weights import ModelWeights, init_weights
from helpers import ALL_ARCHS, random_features, random_hypergraph


def make_samples(n, seed=0, d=4, classes=2, n_max=8, positive=False):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        hg = random_hypergraph(rng, n_max=n_max, m_max=3)
        fs = random_features(rng, hg, d)
        if positive:
            fs = FeatureSet(np.abs(fs.X), fs.B_cap)
        out.append(Sample(i, hg, fs, i % classes))
    return out


class TestMarginLoss:
    @pytest.mark.parametrize("z,y,g,want", [([2, 0, 0], 0, 0.25, 0), ([1, 1], 0, 0.0, 1),
                                            ([0.3, 0.1], 0, 0.25, 1)])
    def test_examples(self, z, y, g, want):
        assert margin_loss(np.array(z, float), y, g) == want

    def test_invalid_label(self):
        with pytest.raises(DataError):
            margin_loss(np.zeros(3), 3, 0.1)

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.data())
    def test_zero_gamma_is_classification_error(self, z, data):
        z = np.array(z)
        y = data.draw(st.integers(0, len(z) - 1))
        others = np.delete(z, y)
        err = int(predict(z) != y or np.any(others == z[y]))
        assert margin_loss(z, y, 0.0) == err

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.floats(0, 3), st.floats(0, 3))
    def test_monotone_in_gamma(self, z, g1, g2):
        z = np.array(z)
        lo, hi = sorted((g1, g2))
        assert margin_loss(z, 0, lo) <= margin_loss(z, 0, hi)


class TestDatasetMarginLoss:
    def _readout_only(self, W):
        return ModelWeights("HGNN", 1, [2, 2, 2], {"W1": np.eye(2), "W2": W})

    def test_examples(self):
        samples = make_samples(3, d=2)
        insts = [prepare("HGNN", s.hg, s.features) for s in samples]
        zero = self._readout_only(np.zeros((2, 2)))
        assert dataset_margin_loss(zero, insts, [0, 1, 0], 0.25) == 1.0
        w = init_weights("HGNN", 1, 2, 2, 2, 0)
        preds = [int(forward(w, i).logits[0, 1] > forward(w, i).logits[0, 0]) for i in insts]
        labels = list(preds)
        labels[0] = 1 - labels[0]
        got = dataset_margin_loss(w, insts, labels, 0.0)
        want = sum(margin_loss(forward(w, i).logits, y, 0.0) for i, y in zip(insts, labels)) / 3
        assert got == want and 1 / 3 <= got

    def test_wide_margin_zero(self):
        samples = make_samples(4, d=2, positive=True)
        insts = [prepare("HGNN", s.hg, s.features) for s in samples]
        big = self._readout_only(np.array([[0.0, 0.0], [0.0, 0.0]]))
        big.layers["W2"][:, 0] = 1000.0
        assert dataset_margin_loss(big, insts, [0] * len(insts), 0.25) == 0.0

    def test_one_of_three(self):
        samples = make_samples(3, d=2, positive=True)
        insts = [prepare("HGNN", s.hg, s.features) for s in samples]
        w = self._readout_only(np.array([[1000.0, 0.0], [1000.0, 0.0]]))
        assert all(forward(w, i).logits[0, 0] > 1 for i in insts)
        assert dataset_margin_loss(w, insts, [0, 0, 1], 0.25) == pytest.approx(1 / 3)

    def test_empty(self):
        with pytest.raises(DataError):
            dataset_margin_loss(init_weights("HGNN", 1, 2, 2, 2, 0), [], [], 0.1)


class TestOptimisation:
    def test_softmax_ce_gradient(self):
        z = np.array([0.2, -1.0, 3.0])
        loss, g = softmax_ce(z, 2)
        p = np.exp(z) / np.exp(z).sum()
        assert loss == pytest.approx(-np.log(p[2]))
        np.testing.assert_allclose(g, p - np.eye(3)[2])

    def test_sgd_closed_form_step(self):
        samples = make_samples(3, d=3)
        insts = [prepare("UniGCN", s.hg, s.features) for s in samples]
        w = init_weights("UniGCN", 1, 3, 4, 2, 0)
        l2 = 0.01
        _, g_noreg = batch_gradient(w, insts, [0, 1, 0], 0.0)
        _, g = batch_gradient(w, insts, [0, 1, 0], l2)
        before = {k: v.copy() for k, v in w.layers.items()}
        SGD(0.1).step(w.layers, g)
        for k in w.layers:
            np.testing.assert_allclose(w.layers[k] - before[k],
                                       -0.1 * (g_noreg[k] + 2 * l2 * before[k]), atol=1e-15)

    def test_split_indices(self):
        tr, te, va = split_indices(10, (0.5, 0.3, 0.2), 0)
        assert (len(tr), len(te), len(va)) == (5, 3, 2)
        assert sorted(tr + te + va) == list(range(10))
        assert split_indices(10, (0.5, 0.3, 0.2), 0) == (tr, te, va)

    def test_config_validation(self):
        with pytest.raises(DataError):
            TrainConfig(split=(0.5, 0.5, 0.5))
        with pytest.raises(DataError):
            TrainConfig(optimizer="RMSProp")


class TestTrainModel:
    def test_lr_zero_keeps_init(self):
        samples = make_samples(6)
        cfg = TrainConfig(lr=0.0, epochs=2, hidden=5, batch_size=2, l2=0.0)
        res = train_model("UniGCN", samples, cfg)
        init = init_weights("UniGCN", 2, 4, 5, 2, 0, alpha=(0.5, 0.5))
        for k in init.layers:
            np.testing.assert_array_equal(res.weights.layers[k], init.layers[k])

    @pytest.mark.parametrize("arch", ALL_ARCHS)
    def test_same_seed_bit_identical(self, arch, tmp_path):
        samples = make_samples(6)
        cfg = TrainConfig(epochs=2, hidden=5, batch_size=2)
        a = train_model(arch, samples, cfg)
        b = train_model(arch, samples, cfg)
        for k in a.weights.layers:
            assert a.weights.layers[k].tobytes() == b.weights.layers[k].tobytes()
        write_log(a.log, tmp_path / "a.csv")
        write_log(b.log, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_log_fields(self):
        res = train_model("HGNN", make_samples(6), TrainConfig(epochs=3, hidden=4))
        assert [r["epoch"] for r in res.log] == [1, 2, 3]
        assert all(0 <= r["train_margin_loss"] <= 1 for r in res.log)

    @pytest.mark.parametrize("arch", ALL_ARCHS)
    def test_single_sample_overfit(self, arch):
        samples = make_samples(1, seed=3)
        cfg = TrainConfig(epochs=200, hidden=16, batch_size=1, split=(0.98, 0.01, 0.01))
        res = train_model(arch, samples, cfg, num_classes=3)
        assert res.log[-1]["train_margin_loss"] == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch(self):
        samples = make_samples(4)
        cfg = TrainConfig(optimizer="SGD", lr=1e300, epochs=5, hidden=4, l2=1.0)
        with pytest.raises(DivergenceError) as err:
            train_model("UniGCN", samples, cfg)
        assert err.value.epoch >= 1

    def test_empty(self):
        with pytest.raises(DataError):
            train_model("UniGCN", [], TrainConfig())
