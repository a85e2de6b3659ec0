"""Synthetic hypergraph classification datasets and their file format.

A dataset directory holds ``dataset.jsonl`` (one sample per line) and
``manifest.json`` (config echo, per-sample statistics, pooled maxima and the
SHA-256 of the sample file).
"""
import hashlib
import json
import os
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import CoverageError, DataError
from .hypergraph import FeatureSet, Hypergraph, compute_stats

DATASET_FILE = "dataset.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class GenConfig:
    model: str = "ER"
    N: int = 60
    p: float = 0.1
    blocks: int = 2
    p_in: float = 0.3
    p_out: float = 0.02
    M_cap: int = 6
    R_cap: int = 6
    pool: int = 100
    num_classes: int = 3
    d: int = 8
    B_cap: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("ER", "SBM"):
            raise DataError(f"unknown base model {self.model!r}")
        if self.N < 1 or self.pool < 1:
            raise DataError("N and pool must be positive")
        if self.model == "ER" and not 0 < self.p <= 1:
            raise DataError("ER edge probability must lie in (0, 1]")
        if self.model == "SBM":
            if self.blocks < 1 or not (0 <= self.p_in <= 1 and 0 <= self.p_out <= 1):
                raise DataError("SBM needs blocks >= 1 and probabilities in [0, 1]")
        if self.M_cap < 1 or self.R_cap < 1:
            raise DataError("caps must be at least 1")
        if self.num_classes < 2:
            raise DataError("need at least two classes")
        if self.d < 2:
            raise DataError("feature width must be at least 2")
        if not self.B_cap >= 0:
            raise DataError("B_cap must be non-negative")


@dataclass(frozen=True)
class PairGraph:
    n: int
    adj: Tuple[Tuple[int, ...], ...]

    @property
    def edges(self):
        return [(u, v) for u in range(self.n) for v in self.adj[u] if u < v]


def _graph_from_mask(mask):
    n = mask.shape[0]
    upper = np.triu(mask, 1)
    sym = upper | upper.T
    return PairGraph(n, tuple(tuple(np.flatnonzero(sym[i]).tolist()) for i in range(n)))


def er_graph(n, p, rng) -> PairGraph:
    """Erdos-Renyi graph; ``p`` may be any probability in [0, 1]."""
    if not 0 <= p <= 1:
        raise DataError("edge probability must lie in [0, 1]")
    return _graph_from_mask(rng.random((n, n)) < p)


def sbm_graph(n, blocks, p_in, p_out, rng) -> PairGraph:
    """Stochastic block model with uniform block assignment."""
    u = rng.random((n, n))
    block = rng.integers(0, blocks, size=n)
    same = block[:, None] == block[None, :]
    return _graph_from_mask(u < np.where(same, p_in, p_out))


def gen_base_graph(config: GenConfig, rng=None) -> PairGraph:
    """ER or SBM pairwise graph; each unordered pair drawn independently."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if config.model == "ER":
        return er_graph(config.N, config.p, rng)
    return sbm_graph(config.N, config.blocks, config.p_in, config.p_out, rng)


def hyperpa_lift(graph: PairGraph, M_cap, R_cap, seed, num_edges=None) -> Hypergraph:
    """Grow hyperedges over ``graph`` by preferential attachment.

    Seeds are drawn with weight (hyperedge degree + 1) among nodes below
    ``R_cap``; uncovered nodes are forced as seeds once they are as many as
    the hyperedges still to place. Each hyperedge grows through graph
    neighbors of its members, weighted the same way, up to a size drawn
    uniformly from [2, M_cap].
    """
    if graph.n < 1:
        raise DataError("cannot lift an empty graph")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = graph.n
    K = n if num_edges is None else int(num_edges)
    deg = np.zeros(n, dtype=np.int64)
    edges = []
    for k in range(K):
        remaining = K - k
        uncovered = np.flatnonzero(deg == 0)
        if uncovered.size >= remaining:
            start = int(rng.choice(uncovered))
        else:
            avail = np.flatnonzero(deg < R_cap)
            if avail.size == 0:
                break
            wts = (deg[avail] + 1).astype(np.float64)
            start = int(rng.choice(avail, p=wts / wts.sum()))
        size = int(rng.integers(2, M_cap + 1)) if M_cap >= 2 else 1
        members = [start]
        inside = {start}
        frontier = set(graph.adj[start])
        while len(members) < size:
            cand = sorted(v for v in frontier if v not in inside and deg[v] < R_cap)
            if not cand:
                break
            wts = (deg[cand] + 1).astype(np.float64)
            v = int(cand[rng.choice(len(cand), p=wts / wts.sum())])
            members.append(v)
            inside.add(v)
            frontier.update(graph.adj[v])
        deg[members] += 1
        edges.append(members)
    uncovered = np.flatnonzero(deg == 0)
    if uncovered.size:
        raise CoverageError(f"{uncovered.size} nodes left uncovered", uncovered.tolist())
    return Hypergraph(n, edges)


def gen_features(hg: Hypergraph, label, d, B_cap, seed, with_edges=True) -> FeatureSet:
    """Structural descriptors plus a label-keyed Gaussian shift, norm-capped.

    Columns 0 and 1 hold the normalized neighbor count and incident count;
    the remaining d-2 columns are N(0, 0.1^2) noise with 0.5 added to
    column ``2 + label mod (d-2)``. Rows above ``B_cap`` are scaled onto it.
    Hyperedge features are the mean of their member rows.
    """
    if d < 2:
        raise DataError("feature width must be at least 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    st = compute_stats(hg)
    n = hg.num_nodes
    X = np.zeros((n, d))
    X[:, 0] = [len(s) / max(st.D, 1) for s in st.neighbors]
    X[:, 1] = [len(r) / max(st.R, 1) for r in st.incident]
    if d > 2:
        X[:, 2:] = rng.normal(0.0, 0.1, size=(n, d - 2))
        X[:, 2 + label % (d - 2)] += 0.5
    norms = np.linalg.norm(X, axis=1)
    over = norms > B_cap
    X[over] *= (B_cap / norms[over])[:, None]
    Z = None
    if with_edges:
        Z = np.array([X[list(e)].mean(axis=0) for e in hg.hyperedges])
        zn = np.linalg.norm(Z, axis=1)
        zo = zn > B_cap
        Z[zo] *= (B_cap / zn[zo])[:, None]
    return FeatureSet(X, float(B_cap), Z)


@dataclass(frozen=True)
class Sample:
    id: int
    hg: Hypergraph
    features: FeatureSet
    label: int


@dataclass
class Dataset:
    samples: List[Sample]
    manifest: dict

    def __len__(self):
        return len(self.samples)

    @property
    def pooled(self):
        return self.manifest["pooled"]


def gen_sample(config: GenConfig, sid) -> Sample:
    rng = np.random.default_rng(config.seed + sid)
    g = gen_base_graph(config, rng)
    hg = hyperpa_lift(g, config.M_cap, config.R_cap, rng)
    label = int(rng.integers(0, config.num_classes))
    fs = gen_features(hg, label, config.d, config.B_cap, rng)
    return Sample(sid, hg, fs, label)


def sample_stats(s: Sample):
    st = compute_stats(s.hg)
    return {"id": s.id, "N": s.hg.num_nodes, "K": s.hg.num_edges,
            "M": st.M, "R": st.R, "D": st.D, "label": s.label}


def pooled_stats(per_sample):
    return {k: max(r[k] for r in per_sample) for k in ("N", "K", "M", "R", "D")}


def generate(config: GenConfig) -> Dataset:
    samples = [gen_sample(config, i) for i in range(config.pool)]
    return Dataset(samples, build_manifest(samples, asdict(config)))


def build_manifest(samples, config_echo=None, sha256=None):
    per = [sample_stats(s) for s in samples]
    d = samples[0].features.d if samples else 0
    B = max((s.features.B_cap for s in samples), default=0.0)
    C = (config_echo or {}).get("num_classes", max((s.label for s in samples), default=0) + 1)
    return {"config": config_echo, "num_samples": len(samples), "d": d, "B_cap": B,
            "num_classes": C, "samples": per, "pooled": pooled_stats(per) if per else {},
            "sha256": sha256}


def _rows(A):
    return "[" + ",".join("[" + ",".join(format(float(x), ".17g") for x in row) + "]"
                          for row in A) + "]"


def sample_to_line(s: Sample) -> str:
    edges = json.dumps([list(e) for e in s.hg.hyperedges], separators=(",", ":"))
    Z = "null" if s.features.Z is None else _rows(s.features.Z)
    return (f'{{"id":{s.id},"N":{s.hg.num_nodes},"hyperedges":{edges},'
            f'"X":{_rows(s.features.X)},"Z":{Z},"label":{s.label},'
            f'"B_cap":{format(float(s.features.B_cap), ".17g")}}}')


def serialize(dataset: Dataset, out_dir) -> dict:
    """Write the sample file and manifest into ``out_dir``; return the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    body = "".join(sample_to_line(s) + "\n" for s in dataset.samples).encode("utf-8")
    with open(os.path.join(out_dir, DATASET_FILE), "wb") as fh:
        fh.write(body)
    manifest = dict(dataset.manifest)
    manifest["sha256"] = hashlib.sha256(body).hexdigest()
    with open(os.path.join(out_dir, MANIFEST_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    dataset.manifest = manifest
    return manifest


def _sample_from_doc(doc):
    hg = Hypergraph(doc["N"], doc["hyperedges"])
    X = np.array(doc["X"], dtype=np.float64).reshape(hg.num_nodes, -1)
    Z = doc.get("Z")
    Z = None if Z is None else np.array(Z, dtype=np.float64).reshape(hg.num_edges, -1)
    fs = FeatureSet(X, float(doc.get("B_cap", 1.0)), Z)
    fs.check_against(hg)
    return Sample(int(doc["id"]), hg, fs, int(doc["label"]))


def resolve_paths(path):
    if os.path.isdir(path):
        return os.path.join(path, DATASET_FILE), os.path.join(path, MANIFEST_FILE)
    return path, os.path.join(os.path.dirname(path) or ".", MANIFEST_FILE)


def file_sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def load(path) -> Dataset:
    """Read a dataset directory (or its sample file).

    Raises
    ------
    DataError
        Naming the first malformed line, or when the sample count falls
        short of the manifest.
    """
    data_path, man_path = resolve_paths(path)
    try:
        with open(data_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read dataset {data_path}: {exc}") from None
    manifest = None
    if os.path.exists(man_path):
        try:
            with open(man_path, encoding="utf-8") as fh:
                manifest = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read manifest {man_path}: {exc}") from None
    samples = []
    lines = raw.decode("utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for no, line in enumerate(lines, start=1):
        try:
            samples.append(_sample_from_doc(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{data_path}: line {no} is malformed: {exc}") from None
    if not samples:
        raise DataError(f"{data_path}: no samples")
    if manifest is not None:
        want = manifest.get("num_samples", len(samples))
        if len(samples) < want:
            raise DataError(f"{data_path}: line {len(samples) + 1} is missing "
                            f"(manifest lists {want} samples)")
    else:
        manifest = build_manifest(samples, None, hashlib.sha256(raw).hexdigest())
    return Dataset(samples, manifest)


def manifest_hash(path) -> Optional[str]:
    """SHA-256 of the manifest file next to ``path``, if present."""
    _, man_path = resolve_paths(path)
    return file_sha256(man_path) if os.path.exists(man_path) else None
