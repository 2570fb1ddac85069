"""Numba/pure-Python backend selection for the hot kernels.

Set ``ISOCHR_DISABLE_NUMBA=1`` in the environment to force the fallback
path (vectorized numpy where one exists, plain interpreted loops
otherwise). The flag is read once at import; tests and benchmarks may
flip :data:`USE_NUMBA` at runtime instead.
"""

import functools
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None

_disabled = os.environ.get("ISOCHR_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = NUMBA_AVAILABLE and _disabled not in ("1", "true", "yes")


def dual(func):
    """Wrap a loop kernel so it runs jitted when numba is enabled.

    The returned dispatcher picks the compiled body when
    ``backend.USE_NUMBA`` is true at call time. The original Python
    body stays reachable as ``.py_func`` for the backend benchmark.
    Both paths execute identical statements, so results are
    bit-identical.
    """
    compiled = numba.njit(cache=True, nogil=True)(func) if NUMBA_AVAILABLE else None

    @functools.wraps(func)
    def dispatch(*args):
        if USE_NUMBA and compiled is not None:
            return compiled(*args)
        return func(*args)

    dispatch.py_func = func
    dispatch.jit_func = compiled
    return dispatch
