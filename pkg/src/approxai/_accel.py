"""Numba switch.

Hot kernels are written twice: an ``@njit`` scalar loop and a vectorized
numpy fallback. Setting ``APPROXAI_DISABLE_NUMBA=1`` (or running without
numba installed) routes every dispatcher to the numpy path.
"""

import os

_FLAG = "APPROXAI_DISABLE_NUMBA"

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def numba_enabled() -> bool:
    if not HAS_NUMBA:
        return False
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    The undecorated Python function stays reachable as ``func.py_func`` in
    both cases so tests can cross-check the loop logic without the JIT.
    """
    if not HAS_NUMBA:
        func.py_func = func
        return func
    return numba.njit(cache=True, nogil=True)(func)
