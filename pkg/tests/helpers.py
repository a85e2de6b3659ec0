"""Random small instances shared by the test modules."""
import numpy as np

from hypercert.hypergraph import FeatureSet, Hypergraph
from hypercert.models import prepare
from hypercert.weights import init_weights

ALL_ARCHS = ("UniGCN", "AllDeepSets", "MIGN", "TMPHN", "HGNNplus", "HGNN")


def random_hypergraph(rng, n_max=50, m_max=6, n_min=3):
    """Random hypergraph with at least one hyperedge of size >= 2."""
    n = int(rng.integers(n_min, n_max + 1))
    k = int(rng.integers(1, n + 1))
    edges = []
    for _ in range(k):
        size = int(rng.integers(1, min(m_max, n) + 1))
        edges.append(rng.choice(n, size=size, replace=False).tolist())
    if max(len(e) for e in edges) < 2:
        edges.append(rng.choice(n, size=2, replace=False).tolist())
    return Hypergraph(n, edges)


def random_features(rng, hg, d=5, B=1.0, edges=True):
    def rows(n):
        A = rng.standard_normal((n, d))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        return A * rng.uniform(0.2, B, size=(n, 1))
    return FeatureSet(rows(hg.num_nodes), B, rows(hg.num_edges) if edges else None)


def random_instance(arch, rng, L=2, d=5, h=6, C=3, n_max=50, m_max=6, scale=True):
    hg = random_hypergraph(rng, n_max=n_max, m_max=min(m_max, 4) if arch == "TMPHN" else m_max)
    fs = random_features(rng, hg, d)
    order = max(2, max(len(e) for e in hg.hyperedges)) if arch == "TMPHN" else None
    alpha = tuple(rng.uniform(0, 1, size=L)) if arch == "MIGN" else None
    w = init_weights(arch, L, d, h, C, int(rng.integers(0, 2**31)), alpha=alpha, order_M=order)
    if scale:
        w = w.replace({k: v * rng.uniform(0.5, 2.0) for k, v in w.layers.items()})
    return w, prepare(arch, hg, fs, order)
