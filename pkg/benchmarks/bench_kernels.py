"""Time the numba kernels against their pure-numpy twins.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 20] [--seed 0]

Both twins are called directly, so the HYPERCERT_DISABLE_NUMBA flag does
not matter here. The first numba call is timed separately as compile time.
Each row also reports the largest absolute difference between the twins.
"""
import argparse
import time

import numpy as np

from hypercert import _accel
from hypercert import _kernels as K


def best_of(fn, args, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def max_gap(a, b):
    if isinstance(a, tuple):
        return max(max_gap(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def power_iteration_case(rng, n):
    A = rng.standard_normal((n, n))
    G = A.T @ A
    v0 = rng.standard_normal(n)
    v0 /= np.linalg.norm(v0)
    return (G, v0, 1e-12, 5000)


def tensor_case(rng, n_nodes, n_targets, order, d):
    H = rng.standard_normal((n_nodes, d))
    targets = rng.integers(0, n_nodes, size=n_targets)
    coefs = rng.uniform(0.1, 1.0, size=n_targets)
    idx = rng.integers(0, n_nodes, size=(n_targets, order))
    return H, targets, coefs, idx


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        print("numba is not installed; nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)

    cases = []
    for n in (16, 64, 256):
        cases.append((f"power_iteration n={n}", K.power_iteration_numba,
                      K.power_iteration_numpy, power_iteration_case(rng, n)))
    for n_nodes, n_targets, order in ((200, 2000, 3), (1000, 20000, 4)):
        H, targets, coefs, idx = tensor_case(rng, n_nodes, n_targets, order, 64)
        label = f"n={n_nodes} t={n_targets} q={order}"
        cases.append((f"tensor_message {label}", K.tensor_message_numba,
                      K.tensor_message_numpy, (H, targets, coefs, idx, n_nodes)))
        dmsg = rng.standard_normal((n_nodes, H.shape[1]))
        cases.append((f"tensor_message_grad {label}", K.tensor_message_grad_numba,
                      K.tensor_message_grad_numpy, (H, targets, coefs, idx, dmsg)))

    print(f"{'kernel':<44} {'compile s':>10} {'numba ms':>10} {'numpy ms':>10} "
          f"{'speedup':>8} {'max gap':>9}")
    for name, fast, slow, fargs in cases:
        t0 = time.perf_counter()
        fast(*fargs)
        compile_s = time.perf_counter() - t0
        t_fast, out_fast = best_of(fast, fargs, args.repeat)
        t_slow, out_slow = best_of(slow, fargs, args.repeat)
        gap = max_gap(out_fast[:3] if isinstance(out_fast, tuple) else out_fast,
                      out_slow[:3] if isinstance(out_slow, tuple) else out_slow)
        print(f"{name:<44} {compile_s:>10.3f} {1e3 * t_fast:>10.3f} {1e3 * t_slow:>10.3f} "
              f"{t_slow / t_fast:>7.1f}x {gap:>9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
