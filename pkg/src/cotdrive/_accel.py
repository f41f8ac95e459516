"""Numba switch.

Set ``COTDRIVE_DISABLE_NUMBA=1`` to run every kernel on the pure-numpy path.
"""

import functools
import os

_FLAG = os.environ.get("COTDRIVE_DISABLE_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _FLAG not in ("1", "true", "yes", "on")

try:
    import numba as nb
except ImportError:  # pragma: no cover
    nb = None

USE_NUMBA = NUMBA_REQUESTED and nb is not None


def njit(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it untouched."""
    if not USE_NUMBA:
        return fn
    return functools.partial(nb.njit, cache=True, nogil=True)(fn)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
