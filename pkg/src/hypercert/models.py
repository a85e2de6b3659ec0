"""Forward passes and analytic gradients for the six architectures.

`prepare` builds the per-sample context (operators plus input matrix) once;
`forward` and `backward` are then pure functions of weights and context.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import _kernels
from .densela import apply_shared_weight, check_finite, mean_readout, relu, row_normalize
from .errors import DataError, NumericError
from .hypergraph import (ARCHS, FeatureSet, Hypergraph, HyperStats,
                         build_operators, build_tensor_structures, compute_stats)
from .weights import ModelWeights

ROW_EPS = 1e-12


@dataclass(frozen=True)
class Instance:
    """One input hypergraph prepared for a given architecture."""

    arch: str
    hg: Hypergraph
    stats: HyperStats
    X0: np.ndarray
    mats: Dict[str, np.ndarray]
    tensor: Optional[object] = None

    @property
    def B(self):
        """Largest input row norm (node rows, plus hyperedge rows for AllDeepSets)."""
        if self.X0.size == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.X0, axis=1)))


def default_order(hg: Hypergraph):
    return max(2, max(len(e) for e in hg.hyperedges))


def prepare(arch, hg, features: FeatureSet, order_M=None, stats=None) -> Instance:
    if arch not in ARCHS:
        raise DataError(f"unknown architecture {arch!r}")
    features.check_against(hg)
    stats = stats or compute_stats(hg)
    X = np.asarray(features.X)
    if arch == "TMPHN":
        order = default_order(hg) if order_M is None else int(order_M)
        if order < 2:
            raise DataError("TMPHN needs tensor order >= 2 so every message has a factor")
        t = build_tensor_structures(hg, order)
        return Instance(arch, hg, stats, X, {}, t)
    ops = build_operators(hg, stats, arch)
    if arch == "UniGCN":
        mats = {"Q": ops["C2"].T @ ops["C1"].T, "P": ops["C4"].T @ ops["C3"].T}
        X0 = X
    elif arch == "AllDeepSets":
        mats = {"CeT": ops["Ce"].T.copy(), "CvT": ops["Cv"].T.copy()}
        Z = features.Z if features.Z is not None else np.zeros((hg.num_edges, X.shape[1]))
        X0 = np.vstack([X, Z])
    elif arch == "MIGN":
        mats = {"A": ops["A_e"], "P": ops["P"]}
        X0 = X
    else:
        J, T, Dv, De = ops["J"], ops["T"], ops["Dv"], ops["De"]
        de_inv = np.diag(1.0 / np.diag(De))
        core = J @ T @ de_inv @ J.T
        dv = np.diag(Dv)
        if arch == "HGNNplus":
            Pm = core / dv[:, None]
        else:
            s = 1.0 / np.sqrt(dv)
            Pm = s[:, None] * core * s[None, :]
        mats = {"P": Pm}
        X0 = X
    for m in mats.values():
        m.setflags(write=False)
    return Instance(arch, hg, stats, X0, mats, None)


@dataclass
class ForwardTrace:
    arch: str
    hidden: List[np.ndarray]
    pre: List[np.ndarray]
    logits: np.ndarray
    cache: Dict[str, object] = field(default_factory=dict)
    signature: tuple = ()


def _signature(w: ModelWeights, inst: Instance):
    return (w.arch, w.L, tuple((k, v.shape) for k, v in w.layers.items()), inst.X0.shape)


def cni(H, U):
    """Hadamard product of the rows ``H[u]`` for ``u`` in the sequence ``U``."""
    U = list(U)
    if not U:
        raise DataError("cni needs a non-empty node sequence")
    out = np.array(H[U[0]], dtype=np.float64)
    for u in U[1:]:
        out = out * H[u]
    return out


def tensor_message(H, tensor):
    return _kernels.tensor_message(H, tensor.targets, tensor.coefs, tensor.idx, H.shape[0])


def forward(w: ModelWeights, inst: Instance) -> ForwardTrace:
    if w.arch != inst.arch:
        raise DataError(f"weights are {w.arch} but the instance was prepared for {inst.arch}")
    if inst.X0.shape[1] != w.d:
        raise DataError(f"feature width {inst.X0.shape[1]} does not match weights input {w.d}")
    fn = _FORWARD[w.arch]
    trace = fn(w, inst)
    if not np.all(np.isfinite(trace.logits)):
        raise NumericError(f"{w.arch} forward produced non-finite logits")
    trace.signature = _signature(w, inst)
    return trace


def _fwd_unigcn(w, inst):
    Q, P = inst.mats["Q"], inst.mats["P"]
    H = inst.X0
    hidden, pre, QH = [H], [], []
    for l in range(1, w.L + 1):
        q = Q @ H
        A = apply_shared_weight(q, w.layers[f"W{l}"])
        H = P @ relu(A)
        QH.append(q)
        pre.append(A)
        hidden.append(H)
    logits = mean_readout(H, w.layers[f"W{w.L + 1}"])
    return ForwardTrace(w.arch, hidden, pre, logits, {"QH": QH})


def _fwd_hgnn(w, inst):
    P = inst.mats["P"]
    H = inst.X0
    hidden, pre, PH = [H], [], []
    for l in range(1, w.L + 1):
        p = P @ H
        A = apply_shared_weight(p, w.layers[f"W{l}"])
        H = relu(A)
        PH.append(p)
        pre.append(A)
        hidden.append(H)
    logits = mean_readout(H, w.layers[f"W{w.L + 1}"])
    return ForwardTrace(w.arch, hidden, pre, logits, {"PH": PH})


def _fwd_ads(w, inst):
    CeT, CvT = inst.mats["CeT"], inst.mats["CvT"]
    H = inst.X0
    hidden, pre, steps = [H], [], []
    for j in range(1, w.L + 1):
        W1, W2, W3, W4 = (w.layers[f"W{j}_{i}"] for i in range(1, 5))
        a1 = H @ W1
        c1 = CeT @ relu(a1)
        a2 = c1 @ W2
        Hb = relu(a2)
        a3 = Hb @ W3
        c3 = CvT @ relu(a3)
        a4 = c3 @ W4
        H = relu(a4)
        steps.append({"a1": a1, "c1": c1, "a2": a2, "Hb": Hb, "a3": a3, "c3": c3, "a4": a4})
        pre.append(a4)
        hidden.append(H)
    logits = mean_readout(H, w.layers[f"W{w.L + 1}"])
    return ForwardTrace(w.arch, hidden, pre, logits, {"steps": steps})


def _mign_prop(alpha, A):
    return (1.0 + alpha) * np.eye(A.shape[0]) + A


def _fwd_mign(w, inst):
    A, P = inst.mats["A"], inst.mats["P"]
    Hb0 = P @ inst.X0
    a0 = Hb0 @ w.layers["W0"]
    H = relu(a0)
    hidden, pre, LH = [H], [a0], []
    for l in range(1, w.L + 1):
        lh = _mign_prop(w.alpha[l - 1], A) @ H
        a = lh @ w.layers[f"W{l}"]
        H = relu(a)
        LH.append(lh)
        pre.append(a)
        hidden.append(H)
    AH = A @ H
    ao = AH @ w.layers[f"W{w.L + 1}"]
    logits = relu(ao).mean(axis=0, keepdims=True)
    return ForwardTrace(w.arch, hidden, pre, logits,
                        {"Hb0": Hb0, "LH": LH, "AH": AH, "ao": ao})


def _fwd_tmphn(w, inst):
    t = inst.tensor
    if t.order != w.order_M:
        raise DataError(f"instance tensor order {t.order} differs from weights order {w.order_M}")
    a0 = inst.X0 @ w.layers["W0"]
    H = relu(a0)
    hidden, pre, layers = [H], [a0], []
    for l in range(1, w.L + 1):
        msg = tensor_message(H, t)
        G = np.hstack([H, msg])
        a = G @ w.layers[f"W{l}"]
        s = relu(a)
        H = row_normalize(s, ROW_EPS)
        layers.append({"G": G, "s": s})
        pre.append(a)
        hidden.append(H)
    logits = mean_readout(H, w.layers[f"W{w.L + 1}"])
    return ForwardTrace(w.arch, hidden, pre, logits, {"layers": layers})


_FORWARD = {"UniGCN": _fwd_unigcn, "AllDeepSets": _fwd_ads, "MIGN": _fwd_mign,
            "TMPHN": _fwd_tmphn, "HGNNplus": _fwd_hgnn, "HGNN": _fwd_hgnn}


def logits(w: ModelWeights, inst: Instance) -> np.ndarray:
    """Flat logits vector of one forward pass."""
    return forward(w, inst).logits[0]


def predict(z) -> int:
    """Arg-max class; ties go to the lowest index."""
    return int(np.argmax(np.asarray(z).ravel()))


def _mean_readout_grad(H, W, g):
    n = H.shape[0]
    dW = H.mean(axis=0, keepdims=True).T @ g
    dH = np.repeat(g @ W.T / n, n, axis=0)
    return dW, dH


def _row_normalize_grad(s, dy, eps=ROW_EPS):
    norms = np.sqrt(np.sum(s * s, axis=1))
    out = np.zeros_like(s)
    keep = norms > eps
    if np.any(keep):
        y = s[keep] / norms[keep, None]
        dyk = dy[keep]
        out[keep] = (dyk - y * np.sum(y * dyk, axis=1, keepdims=True)) / norms[keep, None]
    return out


def backward(w: ModelWeights, trace: ForwardTrace, inst: Instance, upstream) -> Dict[str, np.ndarray]:
    """Gradients of ``logits @ upstream.T`` with respect to every layer."""
    g = np.asarray(upstream, dtype=np.float64).reshape(1, -1)
    if trace.signature != _signature(w, inst):
        raise DataError("stale trace: weights or instance changed since forward")
    if g.shape[1] != w.C:
        raise DataError(f"upstream has {g.shape[1]} entries, expected {w.C}")
    grads = _BACKWARD[w.arch](w, trace, inst, g)
    return {name: grads[name] for name in w.layers}


def _bwd_unigcn(w, tr, inst, g):
    Q, P = inst.mats["Q"], inst.mats["P"]
    grads = {}
    grads[f"W{w.L + 1}"], dH = _mean_readout_grad(tr.hidden[-1], w.layers[f"W{w.L + 1}"], g)
    for l in range(w.L, 0, -1):
        dA = (P.T @ dH) * (tr.pre[l - 1] > 0)
        grads[f"W{l}"] = tr.cache["QH"][l - 1].T @ dA
        dH = Q.T @ (dA @ w.layers[f"W{l}"].T)
    return grads


def _bwd_hgnn(w, tr, inst, g):
    P = inst.mats["P"]
    grads = {}
    grads[f"W{w.L + 1}"], dH = _mean_readout_grad(tr.hidden[-1], w.layers[f"W{w.L + 1}"], g)
    for l in range(w.L, 0, -1):
        dA = dH * (tr.pre[l - 1] > 0)
        grads[f"W{l}"] = tr.cache["PH"][l - 1].T @ dA
        dH = P.T @ (dA @ w.layers[f"W{l}"].T)
    return grads


def _bwd_ads(w, tr, inst, g):
    CeT, CvT = inst.mats["CeT"], inst.mats["CvT"]
    grads = {}
    grads[f"W{w.L + 1}"], dH = _mean_readout_grad(tr.hidden[-1], w.layers[f"W{w.L + 1}"], g)
    for j in range(w.L, 0, -1):
        st = tr.cache["steps"][j - 1]
        W1, W2, W3, W4 = (w.layers[f"W{j}_{i}"] for i in range(1, 5))
        dA4 = dH * (st["a4"] > 0)
        grads[f"W{j}_4"] = st["c3"].T @ dA4
        dA3 = (CvT.T @ (dA4 @ W4.T)) * (st["a3"] > 0)
        grads[f"W{j}_3"] = st["Hb"].T @ dA3
        dA2 = (dA3 @ W3.T) * (st["a2"] > 0)
        grads[f"W{j}_2"] = st["c1"].T @ dA2
        dA1 = (CeT.T @ (dA2 @ W2.T)) * (st["a1"] > 0)
        grads[f"W{j}_1"] = tr.hidden[j - 1].T @ dA1
        dH = dA1 @ W1.T
    return grads


def _bwd_mign(w, tr, inst, g):
    A = inst.mats["A"]
    K = A.shape[0]
    grads = {}
    c = tr.cache
    dao = np.repeat(g / K, K, axis=0) * (c["ao"] > 0)
    Wo = w.layers[f"W{w.L + 1}"]
    grads[f"W{w.L + 1}"] = c["AH"].T @ dao
    dH = A.T @ (dao @ Wo.T)
    for l in range(w.L, 0, -1):
        dA = dH * (tr.pre[l] > 0)
        grads[f"W{l}"] = c["LH"][l - 1].T @ dA
        dH = _mign_prop(w.alpha[l - 1], A).T @ (dA @ w.layers[f"W{l}"].T)
    dA0 = dH * (tr.pre[0] > 0)
    grads["W0"] = c["Hb0"].T @ dA0
    return grads


def _bwd_tmphn(w, tr, inst, g):
    t = inst.tensor
    grads = {}
    grads[f"W{w.L + 1}"], dH = _mean_readout_grad(tr.hidden[-1], w.layers[f"W{w.L + 1}"], g)
    for l in range(w.L, 0, -1):
        lay = tr.cache["layers"][l - 1]
        ds = _row_normalize_grad(lay["s"], dH)
        da = ds * (tr.pre[l] > 0)
        grads[f"W{l}"] = lay["G"].T @ da
        dG = da @ w.layers[f"W{l}"].T
        Hp = tr.hidden[l - 1]
        k = Hp.shape[1]
        dH = dG[:, :k] + _kernels.tensor_message_grad(
            Hp, t.targets, t.coefs, t.idx, np.ascontiguousarray(dG[:, k:]))
    dA0 = dH * (tr.pre[0] > 0)
    grads["W0"] = inst.X0.T @ dA0
    return grads


_BACKWARD = {"UniGCN": _bwd_unigcn, "AllDeepSets": _bwd_ads, "MIGN": _bwd_mign,
             "TMPHN": _bwd_tmphn, "HGNNplus": _bwd_hgnn, "HGNN": _bwd_hgnn}


def check_logits(z, what="logits"):
    return check_finite(z, what)
