import math

import numpy as np
import pytest

from hypercert.densela import spectral_norm
from hypercert.errors import DataError
from hypercert.hypergraph import FeatureSet, Hypergraph
from hypercert.models import backward, cni, forward, logits, predict, prepare
from hypercert.perturb import max_row_norms, phi_bound
from hypercert.weights import (ModelWeights, init_weights, load_weights, save_weights,
                               weights_from_text, weights_to_text)
from helpers import ALL_ARCHS, random_features, random_hypergraph, random_instance
from oracles import finite_difference


class TestForwardExamples:
    def test_single_node_unigcn(self):
        hg = Hypergraph(1, [[0]])
        inst = prepare("UniGCN", hg, FeatureSet(np.array([[1.0]]), 1.0))
        w = ModelWeights("UniGCN", 1, [1, 1, 1], {"W1": np.eye(1), "W2": np.eye(1)})
        np.testing.assert_allclose(forward(w, inst).hidden[1], [[1.0]])
        np.testing.assert_allclose(logits(w, inst), [1.0])

    @pytest.mark.parametrize("arch", ALL_ARCHS)
    def test_zero_features_give_zero_logits(self, arch):
        rng = np.random.default_rng(1)
        hg = random_hypergraph(rng, n_max=8, m_max=3)
        fs = FeatureSet(np.zeros((hg.num_nodes, 4)), 1.0)
        order = 3 if arch == "TMPHN" else None
        w = init_weights(arch, 2, 4, 5, 3, 0, order_M=order)
        np.testing.assert_array_equal(logits(w, prepare(arch, hg, fs, order)), 0.0)

    def test_mign_single_edge(self):
        hg = Hypergraph(3, [[0, 1, 2]])
        fs = random_features(np.random.default_rng(2), hg, 4, edges=False)
        w = init_weights("MIGN", 1, 4, 5, 2, 3, alpha=(0.0,))
        tr = forward(w, prepare("MIGN", hg, fs))
        H0 = tr.hidden[0]
        np.testing.assert_allclose(tr.hidden[1], np.maximum(H0 @ w.layers["W1"], 0.0))

    def test_arch_mismatch(self):
        w, inst = random_instance("UniGCN", np.random.default_rng(0), n_max=6)
        w2 = init_weights("HGNN", 2, 5, 6, 3, 0)
        with pytest.raises(DataError):
            forward(w2, inst)

    def test_unknown_arch(self):
        hg = Hypergraph(2, [[0, 1]])
        with pytest.raises(DataError):
            prepare("GCN", hg, FeatureSet(np.zeros((2, 2)), 1.0))

    def test_tmphn_rejects_order_one(self):
        hg = Hypergraph(2, [[0], [1]])
        with pytest.raises(DataError):
            prepare("TMPHN", hg, FeatureSet(np.zeros((2, 2)), 1.0), order_M=1)


class TestCNI:
    def test_examples(self):
        H = np.array([[1.0, 2.0], [3.0, 0.0], [1.0, 1.0]])
        np.testing.assert_array_equal(cni(H, [1]), H[1])
        np.testing.assert_array_equal(cni(H, [0, 1]), [3.0, 0.0])
        np.testing.assert_array_equal(cni(H, [0, 2, 1]), cni(H, [0, 1]))

    def test_empty(self):
        with pytest.raises(DataError):
            cni(np.ones((2, 2)), [])

    def test_permutation_invariant(self):
        H = np.random.default_rng(0).standard_normal((4, 3))
        np.testing.assert_allclose(cni(H, [0, 1, 3]), cni(H, [3, 0, 1]))


class TestBackward:
    @pytest.mark.parametrize("arch", ALL_ARCHS)
    def test_zero_upstream(self, arch):
        w, inst = random_instance(arch, np.random.default_rng(3), n_max=8)
        g = backward(w, forward(w, inst), inst, np.zeros(w.C))
        assert set(g) == set(w.layers)
        for v in g.values():
            np.testing.assert_array_equal(v, 0.0)

    def test_readout_closed_form(self):
        w, inst = random_instance("UniGCN", np.random.default_rng(4), n_max=8)
        tr = forward(w, inst)
        up = np.array([0.3, -1.0, 2.0])
        g = backward(w, tr, inst, up)
        np.testing.assert_allclose(g["W3"], tr.hidden[-1].mean(axis=0)[:, None] @ up[None, :])

    @pytest.mark.parametrize("arch", ALL_ARCHS)
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_finite_difference(self, arch, seed):
        rng = np.random.default_rng(100 + seed)
        w, inst = random_instance(arch, rng, L=2, d=3, h=4, C=3, n_max=5)
        up = rng.standard_normal(w.C)
        g = backward(w, forward(w, inst), inst, up)
        for name, W in w.layers.items():
            fd = finite_difference(lambda: float(logits(w, inst) @ up), W)
            scale = max(np.abs(fd).max(), np.abs(g[name]).max(), 1e-6)
            assert np.abs(fd - g[name]).max() / scale < 1e-4, name

    def test_stale_trace(self):
        w, inst = random_instance("UniGCN", np.random.default_rng(5), n_max=8)
        tr = forward(w, inst)
        w2 = init_weights("UniGCN", 2, 5, 7, 3, 0)
        with pytest.raises(DataError):
            backward(w2, tr, inst, np.ones(3))

    def test_upstream_length(self):
        w, inst = random_instance("HGNN", np.random.default_rng(5), n_max=8)
        with pytest.raises(DataError):
            backward(w, forward(w, inst), inst, np.ones(4))


class TestPredict:
    @pytest.mark.parametrize("z,want", [([0.1, 0.9, 0.3], 1), ([0.5, 0.5], 0), ([-1, -2], 0)])
    def test_examples(self, z, want):
        assert predict(z) == want


def beta_normalize(w):
    norms = {k: spectral_norm(v) for k, v in w.layers.items()}
    beta = math.exp(np.mean([math.log(s) for s in norms.values()]))
    return w.replace({k: v * (beta / norms[k]) for k, v in w.layers.items()})


class TestProperties:
    @pytest.mark.parametrize("arch", ["UniGCN", "AllDeepSets", "MIGN", "HGNNplus", "HGNN"])
    def test_homogeneity(self, arch):
        rng = np.random.default_rng(7)
        for _ in range(5):
            w, inst = random_instance(arch, rng, n_max=20)
            a, b = logits(w, inst), logits(beta_normalize(w), inst)
            assert np.abs(a - b).max() <= 1e-8 * max(np.abs(a).max(), 1e-300)

    @pytest.mark.parametrize("arch", ["UniGCN", "AllDeepSets", "MIGN"])
    def test_phi_bounds(self, arch):
        rng = np.random.default_rng(8)
        for _ in range(10):
            w, inst = random_instance(arch, rng, L=3, n_max=20)
            s = inst.stats
            phis = max_row_norms(forward(w, inst))
            start = 1 if arch == "MIGN" else 0
            for l in range(start, w.L + 1):
                bound = phi_bound(w, l, s.M, s.R, s.D, inst.B)
                assert phis[l] <= bound * (1 + 1e-9)

    def test_mign_stated_phi_counterexample(self):
        # A path on three nodes with unit features and identity weights:
        # the first step already exceeds the stated bound, the chain bound holds.
        hg = Hypergraph(3, [[0, 1], [1, 2]])
        inst = prepare("MIGN", hg, FeatureSet(np.tile([[1.0, 0.0]], (3, 1)), 1.0))
        w = ModelWeights("MIGN", 1, [2, 2, 2, 2],
                         {"W0": np.eye(2), "W1": np.eye(2), "W2": np.eye(2)}, alpha=(0.0,))
        s = inst.stats
        assert (s.M, s.D) == (2, 2)
        phi1 = max_row_norms(forward(w, inst))[1]
        assert phi1 == pytest.approx(4.0)
        assert phi1 > phi_bound(w, 1, s.M, s.R, s.D, inst.B, form="stated")
        assert phi1 <= phi_bound(w, 1, s.M, s.R, s.D, inst.B, form="chain")

    def test_tmphn_rows_unit_or_zero(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            w, inst = random_instance("TMPHN", rng, L=3, n_max=15)
            for H in forward(w, inst).hidden[1:]:
                n = np.linalg.norm(H, axis=1)
                assert np.all((n == 0) | (np.abs(n - 1) < 1e-12))


class TestWeightsIO:
    @pytest.mark.parametrize("arch", ALL_ARCHS)
    def test_round_trip_exact(self, arch, tmp_path):
        w = init_weights(arch, 2, 4, 5, 3, 11, order_M=3 if arch == "TMPHN" else None)
        w.meta = {"seed": 11}
        save_weights(w, tmp_path / "w.txt")
        back = load_weights(tmp_path / "w.txt")
        assert back.names == w.names and back.alpha == w.alpha
        for k in w.layers:
            np.testing.assert_array_equal(back.layers[k], w.layers[k])
        assert weights_to_text(back) == weights_to_text(w)

    def test_rejects_bad_shape(self):
        w = init_weights("UniGCN", 1, 2, 3, 2, 0)
        with pytest.raises(DataError):
            w.replace({**w.layers, "W1": np.ones((5, 5))})

    def test_rejects_garbage(self):
        with pytest.raises(DataError):
            weights_from_text("not weights")
