"""Empirical checks of the weight-perturbation inequalities.

For each architecture `lemma_rhs` evaluates the closed-form upper bound on
the logit drift caused by a perturbation ``U``; `run_suite` samples
perturbations, measures the actual drift and compares the two.
"""
import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .densela import robust_spectral_norm as _snorm
from .errors import DataError
from .models import forward
from .weights import ModelWeights

SLACK = 1e-9
REPORT_FIELDS = ("trial", "arch", "L", "measured", "rhs", "ratio", "satisfied")


def perturbation_cap(arch, L) -> Optional[float]:
    """Largest admissible ||U|| / ||W|| ratio, or None when unconstrained."""
    if arch in ("UniGCN", "HGNNplus", "HGNN"):
        return 1.0 / (L + 1)
    if arch == "AllDeepSets":
        return 1.0 / (4 * L + 1)
    if arch == "MIGN":
        return 1.0 / (L + 2)
    if arch == "TMPHN":
        return None
    raise DataError(f"unknown architecture {arch!r}")


def sample_constrained_perturbation(w: ModelWeights, cap, rho, seed, spectral=None):
    """Gaussian perturbation of every layer, rescaled so ||U||/||W|| = rho * cap."""
    if not cap > 0:
        raise DataError("cap must be positive")
    if not 0 <= rho:
        raise DataError("rho must be non-negative")
    rng = np.random.default_rng(seed)
    out = {}
    for name, W in w.layers.items():
        sw = spectral[name] if spectral is not None else _snorm(W)
        if sw == 0.0:
            raise DataError(f"layer {name} has zero spectral norm")
        G = rng.standard_normal(W.shape)
        if rho == 0:
            out[name] = np.zeros_like(W)
            continue
        out[name] = G * (rho * cap * sw / _snorm(G))
    return out


def perturbed(w: ModelWeights, U) -> ModelWeights:
    return w.replace({k: w.layers[k] + U[k] for k in w.layers})


def _log_prod(xs):
    return sum(math.log(x) for x in xs) if all(x > 0 for x in xs) else -math.inf


def lemma_rhs(w: ModelWeights, U, M, R, D, B, T_max=1.0, spectral=None, check_cap=True) -> float:
    """Closed-form drift bound for ``w`` perturbed by ``U``."""
    arch, L = w.arch, w.L
    sw = spectral if spectral is not None else {k: _snorm(v) for k, v in w.layers.items()}
    su = {k: _snorm(v) for k, v in U.items()}
    names = list(w.layers)
    if arch == "TMPHN":
        out = names[-1]
        return 2.0 * sw[out] + 3.0 * su[out]
    ratios = [su[k] / sw[k] for k in names]
    cap = perturbation_cap(arch, L)
    if check_cap and max(ratios) > cap * (1 + SLACK):
        raise DataError(f"perturbation ratio {max(ratios):.6g} exceeds the cap {cap:.6g}")
    if B == 0:
        return 0.0
    lp = _log_prod([sw[k] for k in names])
    if arch in ("UniGCN", "HGNNplus", "HGNN"):
        if arch == "UniGCN":
            s = D * R * M
        elif arch == "HGNNplus":
            s = T_max * math.sqrt(D) * R * M
        else:
            s = math.sqrt(T_max) * math.sqrt(D) * R * M
        if s == 0:
            return 0.0
        return math.exp(1.0 + math.log(B) + L * math.log(s) + lp) * sum(ratios)
    if arch == "AllDeepSets":
        out = f"W{L + 1}"
        lz = _log_prod([sw[k] for k in names if k != out])
        c = math.log(30 * (4 * L + 2)) + 1.0 + math.log(B) + math.log(L) \
            + L * (math.log(M + 1) + math.log(R + 1))
        return math.exp(c + lz) * su[out]
    if arch == "MIGN":
        if D == 0:
            return 0.0
        lE = sum(math.log1p(a) for a in w.alpha)
        c = math.log(2) + 2.0 + (L + 2) * math.log(M) + (L + 1) * math.log(D) + math.log(B) + lE
        return math.exp(c + lp) * sum(ratios)
    raise DataError(f"unknown architecture {arch!r}")


@dataclass(frozen=True)
class PerturbTrialConfig:
    arch: str
    trials: int = 100
    rho: float = 1.0
    seed: int = 0
    cap: Optional[float] = None

    def __post_init__(self):
        if self.trials < 1:
            raise DataError("need at least one trial")
        if not 0 < self.rho <= 1 and self.arch != "TMPHN":
            raise DataError("rho must lie in (0, 1]")

    def effective_cap(self, L):
        c = perturbation_cap(self.arch, L)
        if self.cap is not None:
            return self.cap
        return 1.0 if c is None else c


@dataclass
class PerturbReport:
    rows: List[dict] = field(default_factory=list)

    @property
    def satisfaction_rate(self):
        return sum(r["satisfied"] for r in self.rows) / len(self.rows) if self.rows else float("nan")

    @property
    def max_tightness(self):
        return max((r["ratio"] for r in self.rows), default=float("nan"))


def drift(w, U, inst):
    base = forward(w, inst).logits
    moved = forward(perturbed(w, U), inst).logits
    return float(np.linalg.norm(moved - base))


def run_suite(config: PerturbTrialConfig, instances) -> PerturbReport:
    """``instances`` is a sequence of ``(weights, Instance)`` pairs."""
    if not instances:
        raise DataError("run_suite needs at least one instance")
    rep = PerturbReport()
    trial = 0
    for i, (w, inst) in enumerate(instances):
        if w.arch != config.arch:
            raise DataError(f"instance {i} has weights for {w.arch}, not {config.arch}")
        sw = {k: _snorm(v) for k, v in w.layers.items()}
        cap = config.effective_cap(w.L)
        st = inst.stats
        base = forward(w, inst).logits
        for t in range(config.trials):
            U = sample_constrained_perturbation(w, cap, config.rho, [config.seed, i, t], sw)
            measured = float(np.linalg.norm(forward(perturbed(w, U), inst).logits - base))
            rhs = lemma_rhs(w, U, st.M, st.R, st.D, inst.B, spectral=sw)
            ok = measured <= rhs * (1 + SLACK)
            ratio = measured / rhs if rhs > 0 else (0.0 if measured == 0 else math.inf)
            rep.rows.append({"trial": trial, "arch": w.arch, "L": w.L, "measured": measured,
                             "rhs": rhs, "ratio": ratio, "satisfied": int(ok)})
            trial += 1
    return rep


def write_report(rep: PerturbReport, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(REPORT_FIELDS)
        for r in rep.rows:
            wr.writerow([format(r[k], ".17g") if isinstance(r[k], float) else r[k]
                         for k in REPORT_FIELDS])


def max_row_norms(trace):
    """Phi_l for every hidden matrix of a forward trace."""
    return [float(np.max(np.linalg.norm(H, axis=1))) if H.size else 0.0 for H in trace.hidden]


def phi_bound(w: ModelWeights, l, M, R, D, B, form="stated", spectral=None):
    """Upper bound on the max row norm after step ``l``.

    ``form="stated"`` is the documented M-IGN bound E^(1,l) M^l D^(l-1) B
    prod_{i<=l} ||W^(i)||; ``form="chain"`` is the bound that the per-step
    factor M D (1 + alpha) actually composes to, E^(1,l) M^(l+1) D^l B prod.
    The form only matters for M-IGN.
    """
    sw = spectral if spectral is not None else {k: _snorm(v) for k, v in w.layers.items()}
    if w.arch == "UniGCN":
        return (D * R * M) ** l * B * math.prod(sw[f"W{k}"] for k in range(1, l + 1))
    if w.arch == "AllDeepSets":
        z = math.prod(sw[f"W{j}_{i}"] for j in range(1, l + 1) for i in range(1, 5))
        return ((M + 1) * (R + 1)) ** l * B * z
    if w.arch == "MIGN":
        E = math.prod(1 + a for a in w.alpha[:l])
        prod = math.prod(sw[f"W{k}"] for k in range(0, l + 1))
        if form == "chain":
            return E * M ** (l + 1) * D ** l * B * prod
        if l < 1:
            raise DataError("the stated M-IGN bound starts at l = 1")
        return E * M ** l * D ** (l - 1) * B * prod
    raise DataError(f"no representation bound for {w.arch}")
