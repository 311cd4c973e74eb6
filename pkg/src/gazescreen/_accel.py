"""Backend switch for the compiled kernels.

Set ``GAZESCREEN_BACKEND=numpy`` to route every hot kernel through its
vectorized numpy implementation instead of the numba-compiled loop. Both
paths are kept bit-compatible and are cross-checked in the test suite.
"""
from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

BACKEND = os.environ.get("GAZESCREEN_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"GAZESCREEN_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
USE_NUMBA = HAVE_NUMBA and BACKEND == "numba"


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    The loop kernels are always compiled when numba exists, even on the numpy
    backend, so the benchmark and the equivalence tests can call both.
    """
    kwargs.setdefault("cache", True)

    def wrap(f):
        if HAVE_NUMBA:
            return numba.njit(**kwargs)(f)
        return f

    return wrap(fn) if fn is not None else wrap


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
