"""Dense linear algebra on float64 numpy arrays.

A "matrix" here is a finite, 2-D, C-contiguous float64 ndarray. `as_matrix`
is the single validating constructor; the remaining functions take and
return such arrays.
"""
import numpy as np

from . import _accel, _kernels
from .errors import ConvergenceError, DataError, NumericError

SPECTRAL_TOL = 1e-10
SPECTRAL_MAX_ITER = 10000
_START_SEED = 20240229
_START_NOISE = 1e-3


def as_matrix(data, rows=None, cols=None):
    """Validate and copy ``data`` into a finite float64 matrix.

    Parameters
    ----------
    data : array_like
        Nested sequence or array. A flat sequence requires ``rows`` and
        ``cols`` and is read in row-major order.
    rows, cols : int, optional
        Expected shape.

    Raises
    ------
    DataError
        On shape inconsistency or non-finite entries.
    """
    try:
        arr = np.array(data, dtype=np.float64, order="C")
    except (TypeError, ValueError) as exc:
        raise DataError(f"matrix data is not numeric: {exc}") from None
    if arr.ndim == 1 and rows is not None and cols is not None:
        if arr.size != rows * cols:
            raise DataError(
                f"matrix data has {arr.size} entries, expected {rows}x{cols}")
        arr = arr.reshape(rows, cols)
    if arr.ndim == 1 and arr.size == 0 and rows is not None and cols is not None:
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise DataError(f"matrix must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise DataError(f"matrix has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise DataError(f"matrix has {arr.shape[1]} cols, expected {cols}")
    if not np.all(np.isfinite(arr)):
        raise DataError("matrix contains NaN or Inf")
    return arr


def check_finite(arr, what="result"):
    """Raise `NumericError` if ``arr`` has a non-finite entry."""
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


def _debug(arr, what):
    if _accel.DEBUG:
        check_finite(arr, what)
    return arr


def relu(A):
    return np.maximum(A, 0.0)


def apply_shared_weight(H, W):
    """Apply one weight matrix to every row of ``H``.

    With every slice of the third-order weight tensor equal to ``W`` the
    row-wise tensor product is the plain product ``H @ W``.
    """
    if H.ndim != 2 or W.ndim != 2 or H.shape[1] != W.shape[0]:
        raise DataError(
            f"dimension mismatch: {H.shape} times {W.shape}")
    return _debug(H @ W, "apply_shared_weight")


def _start_vector(n):
    rng = np.random.default_rng(_START_SEED)
    v = np.ones(n) / np.sqrt(n)
    v = v + _START_NOISE * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def spectral_norm(A, tol=SPECTRAL_TOL, max_iter=SPECTRAL_MAX_ITER, strict=True):
    """Largest singular value by power iteration on ``A.T @ A``.

    The iteration stops once the eigen-residual of the Gram matrix is below
    ``tol`` relative to the current Rayleigh quotient. The start vector is a
    normalized all-ones vector plus small fixed-seed noise, so it is never
    exactly orthogonal to the top singular vector in practice.

    Parameters
    ----------
    A : ndarray
        Non-empty matrix.
    tol : float
        Relative residual tolerance, must be positive.
    max_iter : int
        Iteration cap.
    strict : bool
        When False, return the last iterate instead of raising on the cap.

    Raises
    ------
    ConvergenceError
        If the cap is reached; ``err.last`` holds the last estimate.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise DataError("spectral_norm needs a non-empty 2-D matrix")
    if not tol > 0:
        raise DataError("tol must be positive")
    G = np.ascontiguousarray(A.T @ A)
    lam, _, iters, ok = _kernels.power_iteration(
        G, _start_vector(G.shape[0]), float(tol), int(max_iter))
    sigma = float(np.sqrt(max(lam, 0.0)))
    if not ok and strict:
        raise ConvergenceError(
            f"power iteration did not converge in {iters} iterations",
            last=sigma, iterations=iters)
    return sigma


def robust_spectral_norm(A):
    """`spectral_norm`, falling back to a full SVD when power iteration stalls.

    Stalls happen when the top two singular values nearly coincide; the SVD
    answer is exact there, so certificates never rest on an unconverged iterate.
    """
    try:
        return spectral_norm(A)
    except ConvergenceError:
        return float(np.linalg.norm(np.asarray(A, dtype=np.float64), 2))


def frobenius_norm(A):
    A = np.asarray(A, dtype=np.float64)
    return float(np.sqrt(np.sum(A * A)))


def row_normalize(A, eps=1e-12):
    """Scale each row to unit l2 norm; rows with norm <= eps become zero."""
    if not eps > 0:
        raise DataError("eps must be positive")
    norms = np.sqrt(np.sum(A * A, axis=1))
    keep = norms > eps
    out = np.zeros_like(A)
    out[keep] = A[keep] / norms[keep, None]
    return _debug(out, "row_normalize")


def mean_readout(H, W):
    """Column mean of ``H`` (as a 1 x d row) times ``W``."""
    if H.shape[0] < 1:
        raise DataError("mean_readout needs at least one row")
    if H.shape[1] != W.shape[0]:
        raise DataError(f"dimension mismatch: {H.shape} readout {W.shape}")
    return _debug(H.mean(axis=0, keepdims=True) @ W, "mean_readout")
