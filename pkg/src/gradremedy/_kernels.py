"""Low-level 1-D vector kernels used by the gradient-surgery hot path.

Every kernel ships in two flavors: a plain numpy implementation and a
numba-compiled loop that fuses the reductions into a single pass over the
data. The active flavor is chosen once at import time from the
``GRADREMEDY_BACKEND`` environment variable:

- ``auto`` (default): numba when importable, numpy otherwise
- ``numba``: numba, warning and falling back if it cannot be imported
- ``numpy``: force the pure-numpy path

Both flavors stay importable (``*_numpy`` / ``*_numba``) so tests and
``benchmarks/bench_kernels.py`` can compare them side by side regardless of
the ambient flag.

All kernels expect C-contiguous float64 1-D arrays and never mutate their
inputs.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

BACKEND_ENV_VAR = "GRADREMEDY_BACKEND"


# -- numpy flavor ------------------------------------------------------------

def dot_and_norms_numpy(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    """Return (a.b, ||a||_2, ||b||_2) in one call."""
    return float(a @ b), float(np.linalg.norm(a)), float(np.linalg.norm(b))


def norm_numpy(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def add_scaled_numpy(a: np.ndarray, coef: float, b: np.ndarray) -> np.ndarray:
    """Return a + coef * b without touching the inputs."""
    return a + coef * b


def vec_add_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a + b


def scale_numpy(a: np.ndarray, c: float) -> np.ndarray:
    return c * a


# -- numba flavor ------------------------------------------------------------
# Plain-python loop bodies, compiled below when numba is available. The fused
# single-pass reductions are where numba pays off over numpy's separate
# dot/norm/norm traversals.

def _dot_and_norms_loop(a, b):
    dot = 0.0
    sq_a = 0.0
    sq_b = 0.0
    for i in range(a.shape[0]):
        dot += a[i] * b[i]
        sq_a += a[i] * a[i]
        sq_b += b[i] * b[i]
    return dot, math.sqrt(sq_a), math.sqrt(sq_b)


def _norm_loop(a):
    sq = 0.0
    for i in range(a.shape[0]):
        sq += a[i] * a[i]
    return math.sqrt(sq)


def _add_scaled_loop(a, coef, b):
    out = np.empty(a.shape[0], dtype=np.float64)
    for i in range(a.shape[0]):
        out[i] = a[i] + coef * b[i]
    return out


def _vec_add_loop(a, b):
    out = np.empty(a.shape[0], dtype=np.float64)
    for i in range(a.shape[0]):
        out[i] = a[i] + b[i]
    return out


def _scale_loop(a, c):
    out = np.empty(a.shape[0], dtype=np.float64)
    for i in range(a.shape[0]):
        out[i] = c * a[i]
    return out


def _requested_backend() -> str:
    value = os.environ.get(BACKEND_ENV_VAR, "auto").strip().lower()
    if value not in ("auto", "numba", "numpy"):
        warnings.warn(
            f"{BACKEND_ENV_VAR}={value!r} not recognized; using 'auto'",
            stacklevel=2,
        )
        return "auto"
    return value


dot_and_norms_numba = None
norm_numba = None
add_scaled_numba = None
vec_add_numba = None
scale_numba = None

_requested = _requested_backend()

if _requested in ("auto", "numba"):
    try:
        from numba import njit
    except ImportError:
        if _requested == "numba":
            warnings.warn(
                "numba requested via GRADREMEDY_BACKEND but not importable; "
                "falling back to numpy kernels"
            )
        _HAS_NUMBA = False
    else:
        _jit = njit(cache=True, fastmath=False)
        dot_and_norms_numba = _jit(_dot_and_norms_loop)
        norm_numba = _jit(_norm_loop)
        add_scaled_numba = _jit(_add_scaled_loop)
        vec_add_numba = _jit(_vec_add_loop)
        scale_numba = _jit(_scale_loop)
        _HAS_NUMBA = True
else:
    _HAS_NUMBA = False

if _HAS_NUMBA and _requested != "numpy":
    _ACTIVE = "numba"
    dot_and_norms = dot_and_norms_numba
    norm = norm_numba
    add_scaled = add_scaled_numba
    vec_add = vec_add_numba
    scale = scale_numba
else:
    _ACTIVE = "numpy"
    dot_and_norms = dot_and_norms_numpy
    norm = norm_numpy
    add_scaled = add_scaled_numpy
    vec_add = vec_add_numpy
    scale = scale_numpy


def active_backend() -> str:
    """Name of the kernel flavor selected at import time."""
    return _ACTIVE
