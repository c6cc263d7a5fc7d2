"""Switch between numba-compiled kernels and their plain numpy/Python fallback.

Set ``ERGMVI_DISABLE_NUMBA=1`` (or have numba missing) to run every kernel as
ordinary Python. Both paths execute the same source, so they produce the same
numbers; the fallback exists for debugging and for platforms without numba.
"""

import os

_FLAG = os.environ.get("ERGMVI_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

NUMBA_ENABLED = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def jit(func):
    """Compile ``func`` with ``numba.njit`` when enabled, else return it untouched."""
    if not NUMBA_ENABLED:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if NUMBA_ENABLED else "python"
