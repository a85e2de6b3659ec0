"""Hot loops with a numba implementation and a pure-numpy twin.

The public names at the bottom dispatch on `_accel.NUMBA_ENABLED`. Both
twins are importable (``*_numba`` / ``*_numpy``) so tests can check that
they agree.
"""
import numpy as np

from . import _accel


def _power_iteration_loops(G, v0, tol, max_iter):
    n = G.shape[0]
    v = v0.copy()
    w = np.empty(n)
    lam = 0.0
    for it in range(1, max_iter + 1):
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += G[i, j] * v[j]
            w[i] = s
        lam = 0.0
        wn = 0.0
        for i in range(n):
            lam += v[i] * w[i]
            wn += w[i] * w[i]
        wn = np.sqrt(wn)
        if wn == 0.0:
            return 0.0, v, it, True
        r = 0.0
        for i in range(n):
            d = w[i] - lam * v[i]
            r += d * d
        if np.sqrt(r) <= tol * lam:
            return lam, v, it, True
        for i in range(n):
            v[i] = w[i] / wn
    return lam, v, max_iter, False


def power_iteration_numpy(G, v0, tol, max_iter):
    """Power iteration on a symmetric PSD matrix.

    Returns ``(lam, v, iterations, converged)``. Convergence means the
    residual ``||G v - lam v||`` fell below ``tol * lam``.
    """
    v = v0.copy()
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = G @ v
        lam = float(v @ w)
        wn = float(np.sqrt(w @ w))
        if wn == 0.0:
            return 0.0, v, it, True
        if np.linalg.norm(w - lam * v) <= tol * lam:
            return lam, v, it, True
        v = w / wn
    return lam, v, max_iter, False


def _tensor_message_loops(H, targets, coefs, idx, n_nodes):
    d = H.shape[1]
    out = np.zeros((n_nodes, d))
    for t in range(targets.shape[0]):
        v = targets[t]
        c = coefs[t]
        for k in range(d):
            p = c
            for j in range(idx.shape[1]):
                p *= H[idx[t, j], k]
            out[v, k] += p
    return out


def tensor_message_numpy(H, targets, coefs, idx, n_nodes):
    """Sum of coefficient-weighted Hadamard products of gathered rows.

    ``out[targets[t]] += coefs[t] * prod_j H[idx[t, j]]``.
    """
    out = np.zeros((n_nodes, H.shape[1]))
    if targets.shape[0] == 0:
        return out
    prod = np.prod(H[idx], axis=1) * coefs[:, None]
    np.add.at(out, targets, prod)
    return out


def _tensor_message_grad_loops(H, targets, coefs, idx, dmsg):
    n, d = H.shape
    q = idx.shape[1]
    dH = np.zeros((n, d))
    for t in range(targets.shape[0]):
        v = targets[t]
        c = coefs[t]
        for k in range(d):
            g = c * dmsg[v, k]
            if g == 0.0:
                continue
            for j in range(q):
                p = g
                for jj in range(q):
                    if jj != j:
                        p *= H[idx[t, jj], k]
                dH[idx[t, j], k] += p
    return dH


def tensor_message_grad_numpy(H, targets, coefs, idx, dmsg):
    """Gradient of `tensor_message` with respect to ``H``."""
    dH = np.zeros_like(H)
    if targets.shape[0] == 0:
        return dH
    rows = H[idx]
    g = dmsg[targets] * coefs[:, None]
    q = idx.shape[1]
    for j in range(q):
        others = g.copy()
        for jj in range(q):
            if jj != j:
                others *= rows[:, jj, :]
        np.add.at(dH, idx[:, j], others)
    return dH


power_iteration_numba = _accel.njit(_power_iteration_loops)
tensor_message_numba = _accel.njit(_tensor_message_loops)
tensor_message_grad_numba = _accel.njit(_tensor_message_grad_loops)

if _accel.NUMBA_ENABLED:
    power_iteration = power_iteration_numba
    tensor_message = tensor_message_numba
    tensor_message_grad = tensor_message_grad_numba
else:
    power_iteration = power_iteration_numpy
    tensor_message = tensor_message_numpy
    tensor_message_grad = tensor_message_grad_numpy
