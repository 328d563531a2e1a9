"""Backend selection for the compiled kernels.

Set ``EBUNFOLD_PURE_NUMPY=1`` to bypass numba and run the pure-numpy
implementations of the hot loops.
"""

import os

_FORCE_NUMPY = os.environ.get("EBUNFOLD_PURE_NUMPY", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit as _njit

    _HAS_NUMBA = True
except ImportError:
    _HAS_NUMBA = False


def jit(func=None, **kwargs):
    """Compile with ``numba.njit`` when the numba backend is active, else no-op."""
    if func is None:
        return lambda f: jit(f, **kwargs)
    if _HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return _njit(**kwargs)(func)
    return func


def backend_name():
    return "numba" if _HAS_NUMBA else "numpy"
