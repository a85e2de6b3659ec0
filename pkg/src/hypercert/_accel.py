"""Optional numba acceleration.

Set ``HYPERCERT_DISABLE_NUMBA=1`` before import to force the pure-numpy
kernels. ``HYPERCERT_DEBUG=1`` turns on finiteness checks after every
dense operation.
"""
import os

DISABLE_ENV = "HYPERCERT_DISABLE_NUMBA"
DEBUG_ENV = "HYPERCERT_DEBUG"


def _truthy(value):
    return value.strip().lower() not in ("", "0", "false", "no", "off")


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and not _truthy(os.environ.get(DISABLE_ENV, ""))
DEBUG = _truthy(os.environ.get(DEBUG_ENV, ""))


def njit(fn):
    """Compile ``fn`` in nopython mode, or return None when numba is absent."""
    if not NUMBA_AVAILABLE:
        return None
    return numba.njit(cache=True)(fn)
