"""Hypergraphs, their statistics, and the fixed structural operators.

Everything here is immutable once built. Operator matrices are returned as
read-only numpy arrays.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from math import comb, factorial
from typing import Mapping, Optional, Tuple

import numpy as np

from .errors import DataError

ARCHS = ("UniGCN", "AllDeepSets", "MIGN", "TMPHN", "HGNNplus", "HGNN")
OPERATOR_ARCHS = ("UniGCN", "AllDeepSets", "MIGN", "HGNNplus", "HGNN")
MAX_TENSOR_ORDER = 4


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Hypergraph:
    """``num_nodes`` nodes and a list of non-empty hyperedges.

    Hyperedges are stored as sorted tuples; input order of the list is kept.
    """

    num_nodes: int
    hyperedges: Tuple[Tuple[int, ...], ...]

    def __init__(self, num_nodes, hyperedges):
        if isinstance(num_nodes, bool) or int(num_nodes) != num_nodes or num_nodes < 1:
            raise DataError(f"num_nodes must be a positive integer, got {num_nodes!r}")
        num_nodes = int(num_nodes)
        edges = []
        for k, e in enumerate(hyperedges):
            nodes = [int(v) for v in e]
            if not nodes:
                raise DataError(f"hyperedge {k} is empty")
            if len(set(nodes)) != len(nodes):
                raise DataError(f"hyperedge {k} has duplicate nodes")
            for v in nodes:
                if v < 0 or v >= num_nodes:
                    raise DataError(f"hyperedge {k} has node {v} outside [0, {num_nodes})")
            edges.append(tuple(sorted(nodes)))
        if not edges:
            raise DataError("a hypergraph needs at least one hyperedge")
        object.__setattr__(self, "num_nodes", num_nodes)
        object.__setattr__(self, "hyperedges", tuple(edges))

    @property
    def num_edges(self):
        return len(self.hyperedges)


@dataclass(frozen=True)
class HyperStats:
    M: int
    R: int
    D: int
    neighbors: Tuple[frozenset, ...]
    incident: Tuple[Tuple[int, ...], ...]


def compute_stats(hg: Hypergraph) -> HyperStats:
    """Max hyperedge size M, max incident count R, max neighbor count D."""
    n = hg.num_nodes
    incident = [[] for _ in range(n)]
    neigh = [set() for _ in range(n)]
    for k, e in enumerate(hg.hyperedges):
        for v in e:
            incident[v].append(k)
            neigh[v].update(e)
    for v in range(n):
        neigh[v].discard(v)
    M = max(len(e) for e in hg.hyperedges)
    R = max(len(r) for r in incident)
    D = max(len(s) for s in neigh)
    return HyperStats(M=M, R=R, D=D,
                      neighbors=tuple(frozenset(s) for s in neigh),
                      incident=tuple(tuple(r) for r in incident))


@dataclass(frozen=True)
class FeatureSet:
    """Node features X (N x d), optional hyperedge features Z (K x d)."""

    X: np.ndarray
    B_cap: float
    Z: Optional[np.ndarray] = None

    def __post_init__(self):
        X = _frozen(self.X)
        if X.ndim != 2:
            raise DataError("X must be 2-D")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains NaN or Inf")
        if not self.B_cap >= 0:
            raise DataError("B_cap must be non-negative")
        lim = self.B_cap + 1e-9
        if X.size and np.max(np.linalg.norm(X, axis=1)) > lim:
            raise DataError(f"a row of X exceeds the norm cap {self.B_cap}")
        object.__setattr__(self, "X", X)
        if self.Z is not None:
            Z = _frozen(self.Z)
            if Z.ndim != 2 or Z.shape[1] != X.shape[1]:
                raise DataError("Z must be 2-D with the same width as X")
            if not np.all(np.isfinite(Z)):
                raise DataError("Z contains NaN or Inf")
            if Z.size and np.max(np.linalg.norm(Z, axis=1)) > lim:
                raise DataError(f"a row of Z exceeds the norm cap {self.B_cap}")
            object.__setattr__(self, "Z", Z)

    @property
    def d(self):
        return self.X.shape[1]

    def check_against(self, hg: Hypergraph):
        if self.X.shape[0] != hg.num_nodes:
            raise DataError(
                f"X has {self.X.shape[0]} rows but the hypergraph has {hg.num_nodes} nodes")
        if self.Z is not None and self.Z.shape[0] != hg.num_edges:
            raise DataError(
                f"Z has {self.Z.shape[0]} rows but the hypergraph has {hg.num_edges} hyperedges")


@dataclass(frozen=True)
class StructuralOperators:
    arch: str
    mats: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.mats[key]


def incidence(hg: Hypergraph) -> np.ndarray:
    """N x K matrix with 1 where node i lies in hyperedge j."""
    J = np.zeros((hg.num_nodes, hg.num_edges))
    for k, e in enumerate(hg.hyperedges):
        J[list(e), k] = 1.0
    return J


def edge_degrees(hg: Hypergraph, stats: HyperStats) -> np.ndarray:
    """d_e = mean over v in e of |N_v|, plus one."""
    sizes = np.array([len(s) for s in stats.neighbors], dtype=np.float64)
    return np.array([sizes[list(e)].mean() + 1.0 for e in hg.hyperedges])


def build_operators(hg: Hypergraph, stats: HyperStats, arch: str) -> StructuralOperators:
    """Fixed matrices encoding ``hg`` for one architecture."""
    n, K = hg.num_nodes, hg.num_edges
    J = incidence(hg)
    if arch == "UniGCN":
        de = edge_degrees(hg, stats)
        C2 = J.T / np.sqrt(de)[:, None]
        nsz = np.array([len(s) for s in stats.neighbors], dtype=np.float64)
        C3 = np.diag(1.0 / np.sqrt(nsz + 1.0))
        C4 = np.eye(n)
        for j, s in enumerate(stats.neighbors):
            C4[list(s), j] = 1.0
        mats = {"C1": J, "C2": C2, "C3": C3, "C4": C4}
    elif arch == "AllDeepSets":
        CeT = np.eye(n + K)
        CeT[n:, :n] = J.T
        CvT = np.eye(n + K)
        CvT[:n, n:] = J
        mats = {"Ce": CeT.T, "Cv": CvT.T}
    elif arch == "MIGN":
        A = (J.T @ J > 0).astype(np.float64)
        np.fill_diagonal(A, 0.0)
        mats = {"A_e": A, "P": J.T}
    elif arch in ("HGNNplus", "HGNN"):
        T = np.eye(K)
        De = np.diag(J.sum(axis=0))
        dv = J @ np.diag(T)
        # nodes outside every hyperedge get unit degree so Dv stays invertible
        dv = np.where(dv > 0, dv, 1.0)
        mats = {"J": J, "T": T, "Dv": np.diag(dv), "De": De}
    else:
        raise DataError(f"unknown architecture {arch!r}; expected one of {OPERATOR_ARCHS}")
    return StructuralOperators(arch, {k: _frozen(v) for k, v in mats.items()})


def adjacency_value(size: int, order: int) -> Fraction:
    """a_e = |e| / (number of surjections from M positions onto e)."""
    surj = sum((-1) ** i * comb(size, i) * (size - i) ** order for i in range(size + 1))
    return Fraction(size, surj)


def span(edge: Tuple[int, ...], order: int):
    """Size-``order`` multisets over ``edge`` that use every element."""
    need = set(edge)
    return [m for m in combinations_with_replacement(edge, order) if set(m) == need]


@dataclass(frozen=True)
class TMPHNStructures:
    """Expanded hyperedges and the flattened message terms.

    Each term t contributes ``coefs[t] * prod_j H[idx[t, j]]`` to the
    message of node ``targets[t]``.
    """

    order: int
    spans: Tuple[Tuple[Tuple[int, ...], ...], ...]
    adjacency: Tuple[float, ...]
    node_edges: Tuple[Tuple[int, ...], ...]
    targets: np.ndarray
    coefs: np.ndarray
    idx: np.ndarray


def build_tensor_structures(hg: Hypergraph, order_M: int) -> TMPHNStructures:
    if int(order_M) != order_M or order_M < 1:
        raise DataError("order_M must be a positive integer")
    order_M = int(order_M)
    if order_M > MAX_TENSOR_ORDER:
        raise DataError(f"order_M={order_M} exceeds the cap {MAX_TENSOR_ORDER}")
    M = max(len(e) for e in hg.hyperedges)
    if order_M < M:
        raise DataError(f"order_M={order_M} is below the largest hyperedge size {M}")
    spans = tuple(tuple(span(e, order_M)) for e in hg.hyperedges)
    adj = tuple(float(adjacency_value(len(e), order_M)) for e in hg.hyperedges)
    node_edges = [[] for _ in range(hg.num_nodes)]
    for k, e in enumerate(hg.hyperedges):
        for v in e:
            node_edges[v].append(k)
    perms = factorial(order_M - 1)
    targets, coefs, idx = [], [], []
    for v in range(hg.num_nodes):
        ev = node_edges[v]
        for k in ev:
            c = adj[k] * perms / len(ev)
            for m in spans[k]:
                rest = list(m)
                rest.remove(v)
                targets.append(v)
                coefs.append(c)
                idx.append(rest)
    q = order_M - 1
    return TMPHNStructures(
        order=order_M, spans=spans, adjacency=adj,
        node_edges=tuple(tuple(e) for e in node_edges),
        targets=np.array(targets, dtype=np.int64),
        coefs=np.array(coefs, dtype=np.float64),
        idx=np.array(idx, dtype=np.int64).reshape(len(targets), q))


def max_row_norm(A) -> float:
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.sqrt(np.sum(A * A, axis=1))))
