"""Numba dispatch.

Set ``WELFAREID_DISABLE_NUMBA=1`` before import to force the pure-numpy
kernels (useful for debugging, profiling, and platforms without numba).
"""
import os

_FLAG = os.environ.get("WELFAREID_DISABLE_NUMBA", "0").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    import numba as _numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise the identity.

    The decorated function is always compiled lazily; whether it is *called*
    is decided by :data:`USE_NUMBA` in the dispatchers of
    :mod:`welfareid.kernels`.
    """
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", False)
    kwargs.setdefault("nogil", True)
    return _numba.njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"
