"""Numba switch.

Set ``TCPROFILE_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The flag
is read once at import time; ``use_numba()`` reports the active choice.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("TCPROFILE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from numba import njit as _numba_njit

    NUMBA_OK = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_OK = False
    _numba_njit = None


def use_numba() -> bool:
    return NUMBA_OK and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator.

    Kernels decorated here are only *called* when ``use_numba()`` is true, so
    the fallback never runs interpreted loops on the hot path.
    """
    if not NUMBA_OK:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba_njit(*args, **kwargs)
