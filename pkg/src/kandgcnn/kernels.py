"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is used. Set ``KANDGCNN_BACKEND=python`` to force the fallback.
"""
import os

import numpy as np

from . import _fallback
from .errors import ContractError, NonFiniteError

_impl = _fallback
BACKEND = "python"
if os.environ.get("KANDGCNN_BACKEND", "").lower() not in ("python", "numpy", "fallback"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def backends():
    """Available backend modules by name, compiled first when present."""
    found = {}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    found["python"] = _fallback
    return found


def knn_indices(x, k, impl=None):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"expected an (N, F) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("kNN input contains non-finite coordinates")
    return (impl or _impl).knn_indices(x, int(k))


def recurrence_table(gamma, a, b, c, slope, intercept, degree, impl=None):
    gamma = np.ascontiguousarray(gamma, dtype=np.float64).reshape(-1)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    return (impl or _impl).recurrence_table(
        gamma, a, b, c, float(slope), float(intercept), int(degree)
    )


def scatter_add_rows(target, index, src, impl=None):
    """``target[index[e]] += src[e]`` for every e, in ascending e order, in place."""
    if target.dtype != np.float64 or not target.flags.c_contiguous:
        raise ContractError("scatter target must be a C-contiguous float64 array")
    index = np.ascontiguousarray(index, dtype=np.int64).reshape(-1)
    src = np.ascontiguousarray(src, dtype=np.float64).reshape(index.size, target.shape[1])
    if index.size and (index.min() < 0 or index.max() >= target.shape[0]):
        raise ContractError("scatter index out of range")
    (impl or _impl).scatter_add_rows(target, index, src)
