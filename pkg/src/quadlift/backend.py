"""Kernel backend selection.

Hot numeric kernels are written once and compiled with numba when available.
Setting the environment variable ``QUADLIFT_BACKEND=numpy`` (before import)
runs the same functions as plain Python/NumPy, which is slower but has no
compilation step and is byte-for-byte equivalent in results.

``benchmarks/backend_bench.py`` compares the two paths.
"""

import os

_requested = os.environ.get("QUADLIFT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise RuntimeError(
        f"QUADLIFT_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numba":
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def jit(func):
    """Compile ``func`` with numba when the numba backend is active."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
