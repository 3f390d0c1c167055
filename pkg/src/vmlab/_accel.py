"""Kernel backend selection.

Numba-compiled kernels are used when numba imports and ``VMLAB_DISABLE_NUMBA``
is unset (or ``0``); otherwise the pure-numpy versions run. Both backends are
deterministic; they agree to rounding, not bit-for-bit.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None

DISABLED = os.environ.get("VMLAB_DISABLE_NUMBA", "").strip() not in ("", "0")
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(fn):
    """``numba.njit(cache=True)`` when numba is importable, else the plain function."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
