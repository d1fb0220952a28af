"""numba toggle for the hot kernels.

Set ``MESHVNE_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
path instead of the jitted one.
"""
import os

DISABLED = os.environ.get("MESHVNE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # numba missing or disabled on purpose
    _njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator."""
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        fn = args[0]
        return _njit(cache=True)(fn) if HAVE_NUMBA else fn

    def wrap(fn):
        if not HAVE_NUMBA:
            return fn
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)(fn)

    return wrap
