"""Optional numba acceleration.

Kernels are written once as plain loops and compiled with ``njit`` when numba
is importable.  Setting ``ASYMDIAG_DISABLE_NUMBA=1`` forces the vectorized
numpy fallbacks everywhere (useful for debugging and for the benchmark).
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba as _numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None
    HAS_NUMBA = False

NUMBA_DISABLED = os.environ.get("ASYMDIAG_DISABLE_NUMBA", "").strip().lower() not in _FALSY
USE_NUMBA = HAS_NUMBA and not NUMBA_DISABLED


def njit(func):
    """Compile ``func`` in nopython mode if numba is available, else return it unchanged."""
    if not HAS_NUMBA:
        return func
    return _numba.njit(cache=True, nogil=True)(func)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
