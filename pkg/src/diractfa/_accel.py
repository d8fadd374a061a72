"""Numba switch.

Hot kernels are compiled with numba when it is importable and the
environment variable ``DIRACTFA_NO_NUMBA`` is unset (or ``0``). Otherwise
the vectorised numpy implementation of every kernel is used.
"""

import os

_FLAG = os.environ.get("DIRACTFA_NO_NUMBA", "").strip().lower()

try:
    import numba as _nb
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG in ("", "0", "false", "no")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is present, identity decorator otherwise.

    The decorated function is always compiled when numba is importable so
    that both code paths stay testable in a single process; ``USE_NUMBA``
    only controls which path the public dispatchers pick.
    """
    bare = len(args) == 1 and callable(args[0]) and not kwargs
    if not HAVE_NUMBA:
        return args[0] if bare else (lambda func: func)
    kwargs.setdefault("cache", True)
    return _nb.njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"
