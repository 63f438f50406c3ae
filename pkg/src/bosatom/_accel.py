"""Numba switch.

Hot loops live in :mod:`bosatom.kernels` in two flavours, a numba-compiled one
and a vectorized numpy one.  ``BOSATOM_DISABLE_NUMBA=1`` (or a missing numba
install) selects the numpy flavour everywhere.
"""
from __future__ import annotations

import os

_FLAG = "BOSATOM_DISABLE_NUMBA"

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None


def numba_enabled() -> bool:
    if _numba is None:
        return False
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if _numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)
