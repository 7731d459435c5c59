"""Numba switch.

Set ``RISKROUTE_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag is
read once at import time.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and (
    os.environ.get("RISKROUTE_DISABLE_NUMBA", "").strip().lower() in _FALSY
)

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(func):
    """Compile ``func`` in nopython mode, or return it untouched without numba."""
    if not NUMBA_AVAILABLE:  # pragma: no cover
        return func
    return numba.njit(func, **NUMBA_OPTS)


def backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
