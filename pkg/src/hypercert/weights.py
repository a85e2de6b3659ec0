"""Model parameters: naming, shapes, initialization and the weights file."""
import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .densela import as_matrix
from .errors import DataError
from .hypergraph import ARCHS


def hidden_count(arch, L):
    """Number of hidden widths in ``dims`` between input and class count."""
    return L + 1 if arch in ("MIGN", "TMPHN") else L


def layer_shapes(arch, L, dims):
    """Ordered ``(name, rows, cols)`` for every weight matrix."""
    if arch not in ARCHS:
        raise DataError(f"unknown architecture {arch!r}")
    if len(dims) != hidden_count(arch, L) + 2:
        raise DataError(f"{arch} with L={L} needs {hidden_count(arch, L) + 2} dims, got {len(dims)}")
    out = []
    if arch in ("UniGCN", "HGNNplus", "HGNN"):
        for l in range(1, L + 2):
            out.append((f"W{l}", dims[l - 1], dims[l]))
    elif arch == "AllDeepSets":
        for j in range(1, L + 1):
            a, b = dims[j - 1], dims[j]
            out += [(f"W{j}_1", a, a), (f"W{j}_2", a, a), (f"W{j}_3", a, a), (f"W{j}_4", a, b)]
        out.append((f"W{L + 1}", dims[L], dims[L + 1]))
    elif arch == "MIGN":
        for l in range(0, L + 2):
            out.append((f"W{l}", dims[l], dims[l + 1]))
    else:
        out.append(("W0", dims[0], dims[1]))
        for l in range(1, L + 1):
            out.append((f"W{l}", 2 * dims[l], dims[l + 1]))
        out.append((f"W{L + 1}", dims[L + 1], dims[L + 2]))
    return out


@dataclass
class ModelWeights:
    arch: str
    L: int
    dims: Tuple[int, ...]
    layers: Dict[str, np.ndarray]
    alpha: Tuple[float, ...] = ()
    order_M: Optional[int] = None
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(x) for x in self.dims)
        self.alpha = tuple(float(a) for a in self.alpha)
        shapes = layer_shapes(self.arch, self.L, self.dims)
        if [s[0] for s in shapes] != list(self.layers):
            raise DataError(f"layer names {list(self.layers)} do not match {self.arch} L={self.L}")
        for name, r, c in shapes:
            W = self.layers[name]
            if W.shape != (r, c):
                raise DataError(f"layer {name} has shape {W.shape}, expected {(r, c)}")
            if not np.all(np.isfinite(W)):
                raise DataError(f"layer {name} has non-finite entries")
        if self.arch == "MIGN":
            if len(self.alpha) != self.L:
                raise DataError(f"MIGN needs {self.L} alpha scalars, got {len(self.alpha)}")
            if any(not 0.0 <= a <= 1.0 for a in self.alpha):
                raise DataError("alpha scalars must lie in [0, 1]")
        if self.arch == "TMPHN" and self.order_M is None:
            raise DataError("TMPHN weights need order_M")

    @property
    def names(self):
        return list(self.layers)

    @property
    def d(self):
        return self.dims[0]

    @property
    def C(self):
        return self.dims[-1]

    @property
    def h(self):
        hid = self.dims[1:-1]
        return max(hid) if hid else self.dims[0]

    def replace(self, layers):
        """Same hyperparameters, new layer matrices (same names)."""
        return ModelWeights(self.arch, self.L, self.dims, dict(layers),
                            self.alpha, self.order_M, dict(self.meta))


def default_dims(arch, L, d, h, C):
    return (d,) + (h,) * hidden_count(arch, L) + (C,)


def init_weights(arch, L, d, h, C, seed, alpha=None, order_M=None):
    """Glorot-uniform initialization from a fixed seed."""
    dims = default_dims(arch, L, d, h, C)
    rng = np.random.default_rng(seed)
    layers = {}
    for name, r, c in layer_shapes(arch, L, dims):
        lim = np.sqrt(6.0 / (r + c))
        layers[name] = rng.uniform(-lim, lim, size=(r, c))
    if arch == "MIGN":
        alpha = tuple(alpha) if alpha is not None else (0.5,) * L
        if len(alpha) == 1 and L != 1:
            alpha = alpha * L
    else:
        alpha = ()
    return ModelWeights(arch, L, dims, layers, alpha,
                        order_M if arch == "TMPHN" else None)


def _fmt(x):
    return format(float(x), ".17g")


def weights_to_text(w: ModelWeights) -> str:
    """Weights document with floats at 17 significant digits."""
    head = {"arch": w.arch, "L": w.L, "dims": list(w.dims), "alpha": [], "order_M": w.order_M,
            "meta": w.meta}
    parts = []
    for k, v in head.items():
        if k == "alpha":
            parts.append('"alpha": [' + ", ".join(_fmt(a) for a in w.alpha) + "]")
        else:
            parts.append(f"{json.dumps(k)}: {json.dumps(v, sort_keys=True)}")
    lay = []
    for name, W in w.layers.items():
        data = ", ".join(_fmt(x) for x in W.ravel())
        lay.append(f'    {{"name": {json.dumps(name)}, "rows": {W.shape[0]}, '
                   f'"cols": {W.shape[1]}, "data": [{data}]}}')
    return "{\n  " + ",\n  ".join(parts) + ',\n  "layers": [\n' + ",\n".join(lay) + "\n  ]\n}\n"


def weights_from_text(text: str) -> ModelWeights:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"weights file is not valid JSON: {exc}") from None
    try:
        layers = {}
        for entry in doc["layers"]:
            layers[entry["name"]] = as_matrix(entry["data"], entry["rows"], entry["cols"])
        return ModelWeights(doc["arch"], int(doc["L"]), tuple(doc["dims"]), layers,
                            tuple(doc.get("alpha", ())), doc.get("order_M"),
                            dict(doc.get("meta", {})))
    except (KeyError, TypeError) as exc:
        raise DataError(f"weights file is missing a field: {exc}") from None


def save_weights(w: ModelWeights, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(weights_to_text(w))


def load_weights(path) -> ModelWeights:
    try:
        with open(path, encoding="utf-8") as fh:
            return weights_from_text(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read weights file {path}: {exc}") from None
