"""Monte Carlo loss estimation, Pearson correlation and Savitzky-Golay smoothing."""
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DataError, SamplesExhaustedError


@dataclass(frozen=True)
class MCConfig:
    eps: float = 0.10
    delta: float = 0.10
    max_samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.eps < 1 and 0 < self.delta < 1):
            raise DataError("eps and delta must lie in (0, 1)")
        if self.max_samples < 1:
            raise DataError("max_samples must be positive")


def stopping_threshold(eps, delta):
    """Upsilon_1 = 1 + (1 + eps) * 4 (e - 2) ln(2 / delta) / eps^2."""
    ups = 4.0 * (math.e - 2.0) * math.log(2.0 / delta) / eps ** 2
    return 1.0 + (1.0 + eps) * ups


@dataclass(frozen=True)
class MCResult:
    estimate: float
    draws: int


def mc_estimate(source: Callable[[np.random.Generator], float], config: MCConfig) -> MCResult:
    """Stopping-rule estimate of the mean of a {0, 1} source.

    ``source(rng)`` returns one draw. Draws continue until their running sum
    reaches ``stopping_threshold``. A sum of 0/1 draws only takes integer
    values, so the sum at stopping is the threshold rounded up; the estimate
    is that integer divided by the number of draws.

    Raises
    ------
    SamplesExhaustedError
        When ``max_samples`` draws do not reach the threshold. The error
        carries the plain sample mean as ``partial``.
    """
    rng = np.random.default_rng(config.seed)
    target = math.ceil(stopping_threshold(config.eps, config.delta))
    s = 0
    for n in range(1, config.max_samples + 1):
        x = source(rng)
        if x not in (0, 1):
            raise DataError(f"source produced {x!r}, expected 0 or 1")
        s += int(x)
        if s >= target:
            return MCResult(target / n, n)
    n = config.max_samples
    raise SamplesExhaustedError(
        f"stopping sum {s} < {target} after {n} draws", partial=s / n, draws=n, total=s)


def bernoulli_source(p):
    return lambda rng: int(rng.random() < p)


def finite_source(values):
    """Draw uniformly with replacement from a fixed list of 0/1 outcomes."""
    vals = np.asarray(values)
    if vals.size == 0:
        raise DataError("empty outcome list")
    return lambda rng: int(vals[rng.integers(0, vals.size)])


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DataError("pearson needs two equal-length sequences of length >= 2")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("pearson needs finite values")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        raise DataError("pearson is undefined for a constant sequence")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def _sg_weights(window, order, pos):
    """Least-squares weights that evaluate the local polynomial at ``pos``."""
    t = np.arange(window, dtype=np.float64) - pos
    V = np.vander(t, order + 1, increasing=True)
    # row 0 of the pseudo-inverse gives the fitted value at t = 0
    return np.linalg.pinv(V)[0]


def savitzky_golay(ys, window, polyorder):
    """Local least-squares polynomial smoothing.

    Interior points use the centered window; the first and last
    ``window // 2`` points are evaluated from the polynomial fitted to the
    first (last) full window.
    """
    y = np.asarray(ys, dtype=np.float64)
    if window % 2 != 1 or window < 1:
        raise DataError("window must be a positive odd integer")
    if polyorder < 0 or window <= polyorder:
        raise DataError("need 0 <= polyorder < window")
    if y.ndim != 1 or y.size < window:
        raise DataError("series must be at least as long as the window")
    half = window // 2
    n = y.size
    out = np.empty(n)
    centre = _sg_weights(window, polyorder, half)
    for i in range(half, n - half):
        out[i] = centre @ y[i - half:i + half + 1]
    for i in range(half):
        out[i] = _sg_weights(window, polyorder, i) @ y[:window]
        out[n - 1 - i] = _sg_weights(window, polyorder, window - 1 - i) @ y[n - window:]
    return out
