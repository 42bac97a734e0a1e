"""Numba switch.

Set ``FANETSIM_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. when
numba is unavailable or when comparing both paths. The choice is made once at
import time.
"""

import os

_DISABLED = os.environ.get("FANETSIM_DISABLE_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on",
}

try:
    if _DISABLED:
        raise ImportError("disabled by FANETSIM_DISABLE_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(func):
    """``numba.njit(cache=True)`` when numba is active, else identity."""
    if not HAVE_NUMBA:
        return func
    return _njit(cache=True)(func)
