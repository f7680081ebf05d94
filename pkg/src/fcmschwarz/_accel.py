"""Numba switch.

Set ``FCMSCHWARZ_DISABLE_NUMBA=1`` to run every kernel through its numpy
fallback. The flag is read once at import time.
"""
import functools
import os

DISABLE_NUMBA = os.environ.get("FCMSCHWARZ_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    import numba as nb
except ImportError:  # pragma: no cover
    nb = None

HAVE_NUMBA = nb is not None and not DISABLE_NUMBA

if HAVE_NUMBA:
    njit = functools.partial(nb.njit, cache=True, nogil=True)
else:
    njit = None


def select(fast, slow):
    """Return the compiled kernel when numba is enabled, else the numpy one."""
    return fast if HAVE_NUMBA else slow
