"""Grid runner: train (or sample) models per dataset, estimate loss, certify, correlate."""
import csv
import json
import math
import os
from dataclasses import dataclass, field, fields
from typing import Dict, Sequence

import numpy as np

from . import synth
from .bounds import certificate_to_text, certify, inputs_from_weights
from .errors import DataError, HypercertError, SamplesExhaustedError
from .evalstats import MCConfig, finite_source, mc_estimate, pearson
from .models import forward
from .train import (TrainConfig, dataset_margin_loss, margin_loss, prepare_all,
                    resolve_order, split_indices, train_model, write_log)
from .weights import init_weights

STUDY_FIELDS = ("dataset", "N", "K", "M", "R", "D", "arch", "L", "weights", "m",
                "empirical", "train_loss", "bound", "log10_bound", "status", "note")
SUMMARY_FIELDS = ("arch", "L", "r", "n")


@dataclass(frozen=True)
class StudyConfig:
    datasets: Sequence
    archs: Sequence[str]
    Ls: Sequence[int]
    out_dir: str
    train: Dict = field(default_factory=dict)
    per_arch: Dict = field(default_factory=dict)
    loss_mode: str = "average"
    bound_mode: str = "appendix"
    random_weights: bool = False
    runs: int = 5
    delta: float = 0.05
    seed: int = 0
    mc: Dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.datasets or not self.archs or not self.Ls:
            raise DataError("datasets, archs and Ls must be non-empty")
        if self.loss_mode not in ("montecarlo", "average"):
            raise DataError(f"unknown loss mode {self.loss_mode!r}")

    def dataset_entries(self):
        out = []
        for d in self.datasets:
            if isinstance(d, str):
                out.append((os.path.basename(os.path.normpath(d)), d))
            else:
                out.append((str(d["id"]), d["path"]))
        return out

    def train_config(self, arch, L):
        known = {f.name for f in fields(TrainConfig)}
        kw = {k: v for k, v in self.train.items() if k in known}
        kw.update({k: v for k, v in self.per_arch.get(arch, {}).items() if k in known})
        kw["L"] = L
        kw.setdefault("seed", self.seed)
        if "split" in kw:
            kw["split"] = tuple(kw["split"])
        return TrainConfig(**kw)


def load_study_config(path, out_dir) -> StudyConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read study config {path}: {exc}") from None
    known = {f.name for f in fields(StudyConfig)}
    extra = set(doc) - known
    if extra:
        raise DataError(f"unknown study config keys: {sorted(extra)}")
    doc["out_dir"] = out_dir
    base = os.path.dirname(os.path.abspath(path))
    ds = []
    for d in doc.get("datasets", []):
        p = d if isinstance(d, str) else d["path"]
        if not os.path.isabs(p):
            p = os.path.join(base, p)
        ds.append(p if isinstance(d, str) else {"id": d["id"], "path": p})
    doc["datasets"] = ds
    try:
        return StudyConfig(**doc)
    except TypeError as exc:
        raise DataError(f"bad study config: {exc}") from None


def heldout_loss(w, insts, labels, idx, gamma, mode, mc):
    """Margin loss on the held-out indices, exact or by stopping-rule estimate."""
    outcomes = [margin_loss(forward(w, insts[i]).logits, labels[i], gamma) for i in idx]
    if mode == "average":
        return float(np.mean(outcomes)), ""
    try:
        return mc_estimate(finite_source(outcomes), mc).estimate, ""
    except SamplesExhaustedError as exc:
        return exc.partial, "mc-exhausted"


def _cell(cfg: StudyConfig, ds_id, ds, arch, L, cell_dir):
    tc = cfg.train_config(arch, L)
    samples = ds.samples
    pooled = ds.pooled
    labels = [s.label for s in samples]
    mc = MCConfig(**{"seed": cfg.seed, **cfg.mc})
    stem = os.path.join(cell_dir, f"{ds_id}__{arch}__L{L}")
    if not cfg.random_weights:
        res = train_model(arch, samples, tc, ds.manifest.get("num_classes"))
        runs = [(res.weights, res.train_idx, res.test_idx or res.train_idx)]
        insts = res.instances
        write_log(res.log, stem + ".log.csv")
    else:
        order = resolve_order(arch, samples, tc.order_M)
        insts = prepare_all(arch, samples, order)
        C = max(ds.manifest.get("num_classes") or 0, max(labels) + 1, 2)
        tr, te, _ = split_indices(len(samples), tc.split, tc.seed)
        runs = []
        for r in range(cfg.runs):
            w = init_weights(arch, L, samples[0].features.d, tc.hidden, C, tc.seed + r,
                             alpha=(tc.alpha,) * L, order_M=order)
            runs.append((w, tr, te or tr))
    emps, bounds, trains, notes = [], [], [], []
    for r, (w, tr, te) in enumerate(runs):
        emp, note = heldout_loss(w, insts, labels, te, tc.gamma, cfg.loss_mode, mc)
        if note:
            notes.append(note)
        ls = dataset_margin_loss(w, [insts[i] for i in tr], [labels[i] for i in tr], tc.gamma)
        inp = inputs_from_weights(w, tc.gamma, cfg.delta, len(tr), ds.manifest["B_cap"],
                                  pooled["M"], pooled["R"], pooled["D"])
        cert = certify(inp, ls, cfg.bound_mode)
        suffix = "" if len(runs) == 1 else f".run{r}"
        with open(stem + suffix + ".cert.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(certificate_to_text(cert, {"dataset": ds_id, "mode": cfg.bound_mode}))
        emps.append(emp)
        trains.append(ls)
        bounds.append(_log10_total(ls, cert.log10_complexity))
    log10_bound = _log10_mean(bounds)
    bound = 10.0 ** log10_bound if log10_bound < 308 else math.inf
    return {"weights": "random" if cfg.random_weights else "trained", "m": len(runs[0][1]),
            "empirical": float(np.mean(emps)), "train_loss": float(np.mean(trains)),
            "bound": bound, "log10_bound": log10_bound,
            "status": "ok", "note": ";".join(sorted(set(notes)))}


def _log10_total(empirical, log10_complexity):
    """log10(empirical + 10**log10_complexity) without leaving log space."""
    if empirical <= 0:
        return log10_complexity
    a, b = sorted((math.log10(empirical), log10_complexity))
    return b + math.log10(1.0 + 10.0 ** (a - b))


def _log10_mean(logs):
    """log10 of the mean of 10**x over ``logs``."""
    top = max(logs)
    return top + math.log10(sum(10.0 ** (x - top) for x in logs) / len(logs))


def run_study(cfg: StudyConfig):
    """Run the full grid; return ``(rows, summary)`` and write both CSVs."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    cell_dir = os.path.join(cfg.out_dir, "cells")
    os.makedirs(cell_dir, exist_ok=True)
    rows = []
    for ds_id, path in sorted(cfg.dataset_entries()):
        ds = synth.load(path)
        pooled = ds.pooled
        for arch in sorted(cfg.archs):
            for L in sorted(cfg.Ls):
                row = {"dataset": ds_id, "arch": arch, "L": L,
                       **{k: pooled.get(k, "") for k in ("N", "K", "M", "R", "D")}}
                try:
                    row.update(_cell(cfg, ds_id, ds, arch, L, cell_dir))
                except HypercertError as exc:
                    row.update({"weights": "random" if cfg.random_weights else "trained",
                                "m": "", "empirical": "", "train_loss": "", "bound": "",
                                "log10_bound": "", "status": "error",
                                "note": f"{type(exc).__name__}: {exc}"})
                rows.append(row)
    summary = summarize(rows)
    write_rows(rows, STUDY_FIELDS, os.path.join(cfg.out_dir, "study.csv"))
    write_rows(summary, SUMMARY_FIELDS, os.path.join(cfg.out_dir, "summary.csv"))
    return rows, summary


def summarize(rows):
    """Pearson r of empirical loss against log10 bound for every (arch, L)."""
    cells = {}
    for r in rows:
        if r["status"] == "ok":
            cells.setdefault((r["arch"], int(r["L"])), []).append(r)
    out = []
    keys = sorted({(r["arch"], int(r["L"])) for r in rows})
    for key in keys:
        pts = cells.get(key, [])
        try:
            rr = pearson([float(p["log10_bound"]) for p in pts], [float(p["empirical"]) for p in pts])
        except DataError:
            rr = ""
        out.append({"arch": key[0], "L": key[1], "r": rr, "n": len(pts)})
    return out


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_rows(rows, header, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(r.get(k, "")) for k in header])


def read_rows(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
