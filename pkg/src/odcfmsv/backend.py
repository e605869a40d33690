"""Kernel backend selection.

Hot loops in :mod:`odcfmsv.kernels` are written as plain numpy functions
and compiled with numba when it is available.  Setting the environment
variable ``ODCFMSV_DISABLE_NUMBA`` to ``1``/``true``/``yes`` before import
keeps the pure-numpy versions, which is useful for debugging and for
benchmarking the two paths against each other.
"""

import os

_flag = os.environ.get("ODCFMSV_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag in {"1", "true", "yes", "on"}

NUMBA_ENABLED = False

if not _disabled:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but be safe
        NUMBA_ENABLED = False


def jit_kernel(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it as-is."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(fn)
    return fn
