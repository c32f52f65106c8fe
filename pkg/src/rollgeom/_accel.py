"""Optional numba acceleration.

Set ``ROLLGEOM_NUMBA=0`` to force the pure-numpy path. The same kernel source
runs in both modes; without numba it is plain numpy executed by CPython.
"""
from __future__ import annotations

import os

_flag = os.environ.get("ROLLGEOM_NUMBA", "1").strip().lower()

try:  # pragma: no cover - import guard
    import numba as _numba
except Exception:  # pragma: no cover
    _numba = None

USE_NUMBA = _numba is not None and _flag not in ("0", "false", "no", "off")


def jit(fn):
    """Compile ``fn`` with ``numba.njit`` when enabled, else return it unchanged."""
    if USE_NUMBA:
        return _numba.njit(cache=True)(fn)
    return fn


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
