"""Kernel backend selection.

Hot loops are written once in numba-compatible numpy. With numba available
and ``EFLOTTERY_NUMBA`` not set to a false value they are compiled with
``@njit``; otherwise the same source runs as plain numpy. A compiled kernel
keeps its interpreted twin on ``.py_func``.
"""

from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

_FALSE = {"0", "false", "no", "off"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None

USE_NUMBA = numba is not None and os.environ.get("EFLOTTERY_NUMBA", "1").strip().lower() not in _FALSE


def kernel(fn):
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def interpreted(fn):
    """Return the uncompiled version of a kernel."""
    return getattr(fn, "py_func", fn)
