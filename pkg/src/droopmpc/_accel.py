"""JIT switch for the hot kernels.

Kernels are written in the numpy subset that numba can compile.  Setting
``DROOPMPC_DISABLE_JIT=1`` in the environment (before import) runs the same
source as plain numpy code, which is slower but useful for debugging and for
benchmarking the compiled path against the interpreted one.
"""
import os

_DISABLED = os.environ.get("DROOPMPC_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available and enabled, identity otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def deco(func):
        return func

    return deco


__all__ = ["HAVE_NUMBA", "njit"]
