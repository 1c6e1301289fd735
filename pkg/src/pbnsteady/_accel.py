"""Numba switch.

Set ``PBNSTEADY_DISABLE_NUMBA=1`` to run the pure-numpy kernels instead of
the compiled ones.  Both paths consume the random stream identically.
"""

import os

try:
    import numba
except ModuleNotFoundError:  # pragma: no cover
    numba = None

DISABLED = os.environ.get("PBNSTEADY_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
HAVE_NUMBA = numba is not None


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and not DISABLED else "numpy"


def njit(f=None, **options):
    """``numba.njit`` when numba is importable, identity otherwise."""
    options.setdefault("cache", True)
    if numba is None:
        return f if f is not None else (lambda g: g)
    if f is None:
        return lambda g: numba.njit(g, **options)
    return numba.njit(f, **options)
