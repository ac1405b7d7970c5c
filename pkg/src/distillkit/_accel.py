"""Select between numba-compiled kernels and the pure-numpy fallback.

Set ``DISTILLKIT_DISABLE_NUMBA=1`` to force the numpy path. When numba is not
importable the numpy path is used automatically.
"""

import os
from warnings import warn

_FLAG = os.environ.get("DISTILLKIT_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    if not _DISABLED:
        warn("numba not found, falling back to numpy kernels")

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise the identity decorator.

    The compiled versions are only *dispatched to* when ``USE_NUMBA`` is set;
    decorating unconditionally keeps both paths importable for benchmarks and
    cross-checks.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def thread_cap():
    """Worker cap from ``DISTILLKIT_THREADS`` (None when unset or invalid)."""
    raw = os.environ.get("DISTILLKIT_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        return None
    return n if n >= 1 else None
