"""Margin generalization certificates from weight norms and hypergraph statistics.

Two constant modes are supported. ``appendix`` evaluates the explicit
per-model formulas (constants 32e^4, 32e^8, 144 and the stated cover
sizes). ``theorem`` evaluates the big-O arguments with unit constant. All
products are accumulated as natural logs.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Tuple

from .densela import frobenius_norm, robust_spectral_norm
from .errors import DataError, NumericError
from .weights import ModelWeights

MODES = ("appendix", "theorem")
_LN10 = math.log(10.0)


def _log(x):
    return math.log(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class WeightTerms:
    """W1 and W2 with the per-layer norms they came from.

    For T-MPHN ``W1`` holds the squared readout spectral norm and ``W2``
    the sum of squared Frobenius norms, the two weight terms of its bound.
    """

    W1: float
    W2: float
    log_W1: float
    spectral: Dict[str, float]
    frobenius: Dict[str, float]


def layer_norms(w: ModelWeights):
    spec = {k: robust_spectral_norm(v) for k, v in w.layers.items()}
    frob = {k: frobenius_norm(v) for k, v in w.layers.items()}
    return spec, frob


def weight_terms(w: ModelWeights, norms=None) -> WeightTerms:
    spec, frob = norms if norms is not None else layer_norms(w)
    return weight_terms_from_norms(w.arch, w.L, spec, frob)


def weight_terms_from_norms(arch, L, spec, frob) -> WeightTerms:
    names = list(spec)
    if arch == "TMPHN":
        out = spec[names[-1]]
        W1 = out * out
        W2 = sum(f * f for f in frob.values())
        return WeightTerms(W1, W2, 2 * _log(out), dict(spec), dict(frob))
    for k in names:
        if spec[k] == 0.0:
            raise DataError(f"layer {k} has zero spectral norm; W2 is undefined")
    log_W1 = sum(2 * math.log(spec[k]) for k in names)
    if arch == "AllDeepSets":
        W2 = 0.0
        for j in range(1, L + 1):
            ks = [f"W{j}_{i}" for i in range(1, 5)]
            W2 += math.exp(sum(2 * (math.log(frob[k]) - math.log(spec[k])) for k in ks))
        out = f"W{L + 1}"
        W2 += (frob[out] / spec[out]) ** 2
    else:
        W2 = sum((frob[k] / spec[k]) ** 2 for k in names)
    return WeightTerms(_safe_exp(log_W1), W2, log_W1, dict(spec), dict(frob))


def _safe_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class BoundInputs:
    arch: str
    L: int
    gamma: float
    delta: float
    m: int
    B: float
    h: int
    M: int
    R: int
    D: int
    spectral: Dict[str, float]
    frobenius: Dict[str, float]
    alpha: Tuple[float, ...] = ()
    T_max: float = 1.0

    def __post_init__(self):
        if self.m < 2:
            raise DataError("m must be at least 2")
        if not self.gamma > 0:
            raise DataError("gamma must be positive")
        if not 0 < self.delta < 1:
            raise DataError("delta must lie in (0, 1)")
        if self.L < 1:
            raise DataError("certificates need L >= 1")
        if not self.B > 0 or self.h < 1 or min(self.M, self.R) < 1 or self.D < 0:
            raise DataError("B, h, M, R must be positive and D non-negative")
        if self.arch == "MIGN" and len(self.alpha) != self.L:
            raise DataError("MIGN certificates need one alpha per step")


def inputs_from_weights(w: ModelWeights, gamma, delta, m, B, M, R, D, T_max=1.0, norms=None):
    spec, frob = norms if norms is not None else layer_norms(w)
    return BoundInputs(w.arch, w.L, gamma, delta, m, B, w.h, M, R, D, spec, frob,
                       tuple(w.alpha), T_max)


@dataclass(frozen=True)
class BoundCertificate:
    arch: str
    mode: str
    L: int
    gamma: float
    delta: float
    m: int
    B: float
    h: int
    M: int
    R: int
    D: int
    alpha: Tuple[float, ...]
    T_max: float
    W1: float
    W2: float
    log10_W1: float
    log10_main_term: float
    log_term: float
    complexity: float
    log10_complexity: float
    empirical_loss: float
    total: float
    spectral: Dict[str, float] = field(default_factory=dict)
    frobenius: Dict[str, float] = field(default_factory=dict)


def structural_log_factor(inp: BoundInputs, mode="appendix") -> float:
    """Natural log of the hypergraph-statistics factor of the main term."""
    M, R, D, L = inp.M, inp.R, inp.D, inp.L
    a = inp.arch
    if a == "UniGCN":
        return L * _log(D * R * M)
    if a == "HGNNplus" or (a == "HGNN" and mode == "theorem"):
        return L * _log(inp.T_max * math.sqrt(D) * R * M)
    if a == "HGNN":
        return L * _log(math.sqrt(inp.T_max) * math.sqrt(D) * R * M)
    if a == "AllDeepSets":
        if mode == "appendix":
            return 2 * L * _log(max(M, R))
        return L * _log((M + 1) * (R + 1))
    if a == "MIGN":
        return (2 * L if mode == "appendix" else L) * _log(M * D)
    if a == "TMPHN":
        return 0.0
    raise DataError(f"unknown architecture {a!r}")


def _log_E(alpha, i, j):
    return sum(math.log1p(alpha[k - 1]) for k in range(i, j + 1))


def _cover_log_term(m, n_layers, root, delta):
    """log(m * (n/2) * (m^(1/root) - 1) / delta)."""
    return math.log(m * (n_layers / 2.0) * math.expm1(math.log(m) / root) / delta)


def _terms(inp: BoundInputs, wt: WeightTerms, mode):
    """(log of main summand, additive log term, log of denominator)."""
    L, h, B = inp.L, inp.h, inp.B
    lw = wt.log_W1 + _log(wt.W2)
    S = structural_log_factor(inp, mode)
    lden = math.log(inp.gamma ** 2 * inp.m)
    a = inp.arch
    if a == "TMPHN":
        c = math.log(144.0) if mode == "appendix" else 0.0
        main = c + 2 * _log(L) + _log(h) + _log(math.log(h)) + _log(wt.W2)
        lt = math.log(inp.m * L / inp.delta)
        lden = math.log(inp.gamma ** 2 * inp.m + wt.W1 * inp.m)
        return main, lt, lden
    if mode == "appendix":
        if a in ("UniGCN", "HGNNplus", "HGNN"):
            L1 = L + 1
            main = (math.log(32) + 4 + 2 * _log(B) + S + 2 * math.log(L1) + math.log(h)
                    + _log(math.log(4 * h * L1)) + lw)
            return main, _cover_log_term(inp.m, L1, L1, inp.delta), lden
        if a == "AllDeepSets":
            L2 = 2 * L + 1
            main = (math.log(32) + 4 + 2 * _log(B) + S + 2 * math.log(L2) + math.log(h)
                    + _log(math.log(4 * h * L2)) + lw)
            return main, _cover_log_term(inp.m, L2, 2 * L2, inp.delta), lden
        if a == "MIGN":
            main = math.log(32) + 8 + S + 2 * _log(B) + _log_E(inp.alpha, 2, L) + lw
            return main, _cover_log_term(inp.m, L + 2, 2 * (L + 2), inp.delta), lden
    else:
        if a in ("UniGCN", "HGNNplus", "HGNN"):
            main = 2 * math.log(L) + 2 * _log(B) + math.log(h) + _log(math.log(L * h)) + S + lw
            return main, math.log(inp.m * L / inp.delta), lden
        if a == "AllDeepSets":
            L2 = 4 * L + 1
            main = 2 * math.log(L2) + 2 * _log(B) + math.log(h) + _log(math.log(L2 * h)) + S + lw
            return main, math.log(inp.m * L2 / inp.delta), lden
        if a == "MIGN":
            main = (S + 2 * _log(B) + math.log(h) + _log(math.log(L * h))
                    + 2 * _log_E(inp.alpha, 1, L) + lw)
            return main, math.log(inp.m * L / inp.delta), lden
    raise DataError(f"unknown architecture {a!r}")


def _log_add(main, lt):
    """log(exp(main) + lt) for a real, possibly negative, lt."""
    if lt > 0:
        a = math.log(lt)
        if main == -math.inf:
            return a
        return max(a, main) + math.log1p(math.exp(-abs(a - main)))
    if lt == 0:
        return main
    b = math.log(-lt)
    if main <= b:
        raise NumericError("bound numerator is not positive")
    return main + math.log1p(-math.exp(b - main))


def certify(inp: BoundInputs, empirical_loss, mode="appendix") -> BoundCertificate:
    if mode not in MODES:
        raise DataError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not 0 <= empirical_loss <= 1:
        raise DataError("empirical loss must lie in [0, 1]")
    wt = weight_terms_from_norms(inp.arch, inp.L, inp.spectral, inp.frobenius)
    main, lt, lden = _terms(inp, wt, mode)
    lnum = _log_add(main, lt)
    log_c = 0.5 * (lnum - lden)
    if not math.isfinite(log_c):
        raise NumericError("complexity term is not finite in log space")
    comp = _safe_exp(log_c)
    return BoundCertificate(
        arch=inp.arch, mode=mode, L=inp.L, gamma=inp.gamma, delta=inp.delta, m=inp.m,
        B=inp.B, h=inp.h, M=inp.M, R=inp.R, D=inp.D, alpha=tuple(inp.alpha), T_max=inp.T_max,
        W1=wt.W1, W2=wt.W2, log10_W1=wt.log_W1 / _LN10, log10_main_term=main / _LN10,
        log_term=lt, complexity=comp, log10_complexity=log_c / _LN10,
        empirical_loss=float(empirical_loss), total=float(empirical_loss) + comp,
        spectral=dict(inp.spectral), frobenius=dict(inp.frobenius))


def certificate_to_text(cert: BoundCertificate, provenance=None) -> str:
    doc = asdict(cert)
    doc["alpha"] = list(cert.alpha)
    if provenance is not None:
        doc["provenance"] = provenance
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
