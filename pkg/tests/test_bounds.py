import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypercert.bounds import (BoundInputs, certificate_to_text, certify, inputs_from_weights,
                              structural_log_factor, weight_terms)
from hypercert.errors import DataError
from hypercert.weights import ModelWeights, init_weights
from helpers import ALL_ARCHS

ARCH_L = [(a, L) for a in ALL_ARCHS for L in (1, 2, 4)]


def make_inputs(arch="UniGCN", L=2, m=500, M=20, R=20, D=166, B=1.0, h=64, seed=0, **kw):
    w = init_weights(arch, L, 8, h, 3, seed, order_M=3 if arch == "TMPHN" else None)
    return inputs_from_weights(w, kw.pop("gamma", 0.25), kw.pop("delta", 0.05), m, B, M, R, D,
                               **kw)


def with_stats(inp, **change):
    fields = {k: getattr(inp, k) for k in BoundInputs.__dataclass_fields__}
    fields.update(change)
    return BoundInputs(**fields)


class TestWeightTerms:
    def test_identity_layers(self):
        d, L = 4, 2
        w = ModelWeights("UniGCN", L, [d] * (L + 2), {f"W{i}": np.eye(d) for i in range(1, L + 2)})
        t = weight_terms(w)
        assert t.W1 == pytest.approx(1.0)
        assert t.W2 == pytest.approx((L + 1) * d)

    def test_single_diag(self):
        w = ModelWeights("HGNN", 1, [1, 1, 1], {"W1": np.eye(1), "W2": np.array([[2.0]])})
        t = weight_terms(w)
        assert t.W1 == pytest.approx(4.0)
        assert t.W2 == pytest.approx(2.0)

    @pytest.mark.parametrize("arch", ["UniGCN", "AllDeepSets", "MIGN", "HGNNplus", "HGNN"])
    def test_scaling_one_layer(self, arch):
        w = init_weights(arch, 2, 5, 6, 3, 1)
        t = weight_terms(w)
        name = w.names[1]
        t2 = weight_terms(w.replace({**w.layers, name: 3.0 * w.layers[name]}))
        assert t2.W1 == pytest.approx(9.0 * t.W1, rel=1e-10)
        assert t2.W2 == pytest.approx(t.W2, rel=1e-10)

    def test_zero_layer_named(self):
        w = init_weights("UniGCN", 1, 3, 3, 2, 0)
        with pytest.raises(DataError, match="W2"):
            weight_terms(w.replace({**w.layers, "W2": np.zeros((3, 2))}))

    def test_tmphn_terms(self):
        w = init_weights("TMPHN", 2, 3, 4, 2, 0, order_M=2)
        t = weight_terms(w)
        out = np.linalg.svd(w.layers["W3"], compute_uv=False)[0]
        assert t.W1 == pytest.approx(out ** 2)
        assert t.W2 == pytest.approx(sum(np.sum(v * v) for v in w.layers.values()))


class TestCertify:
    @pytest.mark.parametrize("mode", ["appendix", "theorem"])
    @pytest.mark.parametrize("arch,L", ARCH_L)
    def test_complexity_decays_in_m(self, arch, L, mode):
        vals = [certify(make_inputs(arch, L, m=m, h=8), 0.0, mode).complexity
                for m in (10 ** 3, 10 ** 6, 10 ** 9, 10 ** 12)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < vals[0] * 1e-3

    def test_doubling_D_scales_first_summand(self):
        inp = make_inputs(L=2)
        a = certify(inp, 0.0)
        b = certify(with_stats(inp, D=2 * inp.D), 0.0)
        assert 10 ** (b.log10_main_term - a.log10_main_term) == pytest.approx(4.0, rel=1e-12)

    @pytest.mark.parametrize("arch", ["UniGCN", "MIGN", "HGNNplus"])
    @pytest.mark.parametrize("key", ["D", "M", "R"])
    def test_monotone_in_stats(self, arch, key):
        inp = make_inputs(arch, L=2, M=5, R=5, D=10, h=16)
        vals = [certify(with_stats(inp, **{key: v}), 0.0).complexity for v in (3, 6, 12, 24)]
        if arch == "MIGN" and key == "R":
            assert len(set(vals)) == 1
        else:
            assert all(b > a for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("mode", ["appendix", "theorem"])
    def test_ads_monotone_in_max_MR(self, mode):
        inp = make_inputs("AllDeepSets", L=2, M=4, R=4, D=10, h=16)
        vals = [certify(with_stats(inp, M=v, R=v), 0.0, mode).complexity for v in (4, 8, 16)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_unit_M_R_reduces_to_D_power(self):
        inp = with_stats(make_inputs(L=3), M=1, R=1, D=7)
        assert structural_log_factor(inp) == pytest.approx(3 * math.log(7))

    @given(st.floats(0, 1), st.integers(2, 10 ** 6), st.sampled_from(ALL_ARCHS))
    @settings(max_examples=40, deadline=None)
    def test_total_at_least_empirical(self, emp, m, arch):
        c = certify(make_inputs(arch, L=2, m=m, h=8), emp)
        assert c.total >= emp and c.complexity > 0

    def test_deterministic_text(self):
        inp = make_inputs()
        a = certificate_to_text(certify(inp, 0.1), {"mode": "appendix"})
        b = certificate_to_text(certify(inp, 0.1), {"mode": "appendix"})
        assert a == b
        doc = json.loads(a)
        assert doc["provenance"] == {"mode": "appendix"} and doc["arch"] == "UniGCN"

    def test_log_space_handles_huge_products(self):
        inp = make_inputs(L=12, M=50, R=50, D=400)
        c = certify(inp, 0.0)
        assert math.isfinite(c.log10_complexity) and c.log10_complexity > 40

    def test_invalid_mode_and_inputs(self):
        inp = make_inputs()
        with pytest.raises(DataError):
            certify(inp, 0.0, mode="loose")
        with pytest.raises(DataError):
            certify(inp, 1.5)
        with pytest.raises(DataError):
            with_stats(inp, m=1)
        with pytest.raises(DataError):
            with_stats(inp, delta=1.0)
        with pytest.raises(DataError):
            with_stats(inp, gamma=0.0)

    def test_theorem_and_appendix_differ_for_ads(self):
        inp = make_inputs("AllDeepSets", L=2, M=6, R=3, D=10, h=16)
        assert certify(inp, 0.0, "appendix").complexity != certify(inp, 0.0, "theorem").complexity
