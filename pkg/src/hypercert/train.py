"""Margin losses, optimizers and the training loop."""
import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, DivergenceError, NumericError
from .models import backward, forward, prepare
from .weights import ModelWeights, init_weights

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LOG_FIELDS = ("epoch", "ce_loss", "train_margin_loss", "valid_margin_loss")


def default_optimizer(arch):
    return "SGD" if arch == "AllDeepSets" else "Adam"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Optional[str] = None
    lr: float = 0.01
    epochs: int = 100
    batch_size: int = 20
    l2: float = 1e-4
    gamma: float = 0.25
    seed: int = 0
    split: Tuple[float, float, float] = (0.5, 0.3, 0.2)
    L: int = 2
    hidden: int = 64
    alpha: float = 0.5
    order_M: Optional[int] = None

    def __post_init__(self):
        if self.optimizer not in (None, "SGD", "Adam"):
            raise DataError(f"unknown optimizer {self.optimizer!r}")
        if len(self.split) != 3 or any(not r > 0 for r in self.split):
            raise DataError("split ratios must be three positive numbers")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise DataError("split ratios must sum to 1")
        if not self.gamma >= 0:
            raise DataError("gamma must be non-negative")
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0 or self.l2 < 0:
            raise DataError("epochs, batch size, learning rate and L2 must be non-negative")


def margin_loss(z, label, gamma) -> int:
    """1 when the true-class logit fails to beat every other logit by gamma."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if not 0 <= label < z.size:
        raise DataError(f"label {label} outside [0, {z.size})")
    others = np.delete(z, label)
    best = others.max() if others.size else -np.inf
    return int(z[label] <= gamma + best)


def dataset_margin_loss(w: ModelWeights, instances, labels, gamma) -> float:
    if len(instances) == 0:
        raise DataError("margin loss over an empty sample set")
    bad = sum(margin_loss(forward(w, inst).logits, y, gamma)
              for inst, y in zip(instances, labels))
    return bad / len(instances)


def split_indices(n, split, seed):
    """Seeded train/test/valid index split."""
    perm = np.random.default_rng([seed, 7]).permutation(n)
    n_train = max(1, int(math.floor(n * split[0] + 0.5)))
    n_test = min(n - n_train, int(math.floor(n * split[1] + 0.5)))
    return (sorted(perm[:n_train].tolist()), sorted(perm[n_train:n_train + n_test].tolist()),
            sorted(perm[n_train + n_test:].tolist()))


class SGD:
    def __init__(self, lr):
        self.lr = lr
        self.t = 0

    def step(self, layers, grads):
        self.t += 1
        for k in layers:
            layers[k] -= self.lr * grads[k]


class Adam:
    def __init__(self, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, layers, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            layers[k] -= self.lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + self.eps)


def make_optimizer(name, lr):
    return SGD(lr) if name == "SGD" else Adam(lr)


def softmax_ce(z, label):
    """Cross-entropy and its gradient with respect to the logits."""
    z = np.asarray(z, dtype=np.float64).ravel()
    s = z - z.max()
    p = np.exp(s)
    p /= p.sum()
    loss = -(s[label] - math.log(np.exp(s).sum()))
    g = p.copy()
    g[label] -= 1.0
    return loss, g


def batch_gradient(w, instances, labels, l2):
    """Mean cross-entropy over the batch plus L2, and its gradients."""
    grads = {k: np.zeros_like(v) for k, v in w.layers.items()}
    total = 0.0
    for inst, y in zip(instances, labels):
        tr = forward(w, inst)
        loss, g = softmax_ce(tr.logits, y)
        total += loss
        for k, v in backward(w, tr, inst, g).items():
            grads[k] += v
    n = len(instances)
    for k in grads:
        grads[k] /= n
        grads[k] += 2.0 * l2 * w.layers[k]
    return total / n, grads


@dataclass
class TrainResult:
    weights: ModelWeights
    log: List[dict]
    train_idx: List[int]
    test_idx: List[int]
    valid_idx: List[int]
    instances: list = field(repr=False, default_factory=list)


def prepare_all(arch, samples, order_M=None):
    return [prepare(arch, s.hg, s.features, order_M) for s in samples]


def resolve_order(arch, samples, order_M):
    if arch != "TMPHN":
        return None
    if order_M is not None:
        return int(order_M)
    return max(2, max(max(len(e) for e in s.hg.hyperedges) for s in samples))


def train_model(arch, samples: Sequence, config: TrainConfig, num_classes=None) -> TrainResult:
    """Train ``arch`` on the train split of ``samples``.

    Each sample needs ``hg``, ``features`` and ``label``. The run is fully
    determined by ``config.seed``.
    """
    if len(samples) == 0:
        raise DataError("cannot train on an empty dataset")
    d = samples[0].features.d
    if any(s.features.d != d for s in samples):
        raise DataError("all samples must share one feature width")
    C = num_classes or (max(s.label for s in samples) + 1)
    C = max(C, 2)
    order = resolve_order(arch, samples, config.order_M)
    insts = prepare_all(arch, samples, order)
    labels = [s.label for s in samples]
    tr_idx, te_idx, va_idx = split_indices(len(samples), config.split, config.seed)
    w = init_weights(arch, config.L, d, config.hidden, C, config.seed,
                     alpha=(config.alpha,) * config.L, order_M=order)
    w.meta = {"seed": config.seed, "split": list(config.split), "train_count": len(tr_idx),
              "gamma": config.gamma}
    opt = make_optimizer(config.optimizer or default_optimizer(arch), config.lr)
    rng = np.random.default_rng([config.seed, 11])
    log = []
    for epoch in range(1, config.epochs + 1):
        try:
            perm = rng.permutation(tr_idx)
            total = 0.0
            for start in range(0, len(perm), config.batch_size):
                batch = perm[start:start + config.batch_size]
                loss, grads = batch_gradient(w, [insts[i] for i in batch],
                                             [labels[i] for i in batch], config.l2)
                if not math.isfinite(loss):
                    raise DivergenceError(f"loss became non-finite at epoch {epoch}", epoch)
                total += loss * len(batch)
                opt.step(w.layers, grads)
                if not all(np.all(np.isfinite(v)) for v in w.layers.values()):
                    raise DivergenceError(f"weights became non-finite at epoch {epoch}", epoch)
            log.append({
                "epoch": epoch,
                "ce_loss": total / len(tr_idx),
                "train_margin_loss": dataset_margin_loss(
                    w, [insts[i] for i in tr_idx], [labels[i] for i in tr_idx], config.gamma),
                "valid_margin_loss": (dataset_margin_loss(
                    w, [insts[i] for i in va_idx], [labels[i] for i in va_idx], config.gamma)
                    if va_idx else float("nan")),
            })
        except DivergenceError:
            raise
        except NumericError as exc:
            raise DivergenceError(f"training diverged at epoch {epoch}: {exc}", epoch) from exc
    return TrainResult(w, log, tr_idx, te_idx, va_idx, insts)


def _fmt(x):
    return format(x, ".17g") if isinstance(x, float) else str(x)


def write_log(log, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(LOG_FIELDS)
        for row in log:
            wr.writerow([_fmt(row[k]) for k in LOG_FIELDS])
