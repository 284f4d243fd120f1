"""Numba switch.

Hot loops are written once in the subset of Python that numba compiles.
Setting ``PEERCHOICE_DISABLE_NUMBA=1`` (or running without numba installed)
leaves them as plain Python functions.
"""

import os

_disabled = os.environ.get("PEERCHOICE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError
    import numba
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled


def maybe_njit(func):
    """Compile ``func`` with ``numba.njit`` when acceleration is enabled."""
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend_name():
    return "numba" if USE_NUMBA else "python"
