"""Numba switch.

Set ``GROWNPLATE_DISABLE_NUMBA=1`` to force the pure-numpy kernels (useful for
debugging and for checking the two paths against each other).
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and os.environ.get("GROWNPLATE_DISABLE_NUMBA", "0") in ("", "0")


def njit(f=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    kwargs.setdefault("cache", True)
    if numba is None:
        return f if f is not None else (lambda g: g)
    if f is None:
        return lambda g: numba.njit(g, **kwargs)
    return numba.njit(f, **kwargs)
