"""Kernel backend selection: numba-jitted hot loops with a pure-numpy fallback.

Set ``WIRETAPLAB_BACKEND=numpy`` to disable numba (useful for debugging and
for the benchmark baseline). ``WIRETAPLAB_THREADS=1`` pins BLAS/numba thread
pools, which is required for the bit-reproducibility guarantees.
"""
from __future__ import annotations

import os

_threads = os.environ.get("WIRETAPLAB_THREADS")
if _threads is not None:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMBA_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

_requested = os.environ.get("WIRETAPLAB_BACKEND", "numba").lower()

if _requested == "numpy":
    HAVE_NUMBA = False
else:
    try:
        import numba  # noqa: F401
        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested != "numpy"


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def maybe_jit(func):
    """Jit ``func`` with numba when the numba backend is active, else return it."""
    if USE_NUMBA:
        import numba
        return numba.njit(cache=True)(func)
    return func
