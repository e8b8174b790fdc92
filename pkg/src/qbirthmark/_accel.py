"""Backend switch for the compiled kernels.

Set ``QBIRTHMARK_NUMBA=0`` in the environment before import to force the
pure-numpy path. When numba is not installed the numpy path is used
regardless of the flag.
"""

import os

_FLAG = os.environ.get("QBIRTHMARK_NUMBA", "1").strip().lower()
_REQUESTED = _FLAG not in ("0", "false", "no", "off")

try:
    import numba as _numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _REQUESTED
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Compiled versions are always built when numba exists so the benchmark
    and the cross-check tests can compare both paths in one process.
    """
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)
