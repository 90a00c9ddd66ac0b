"""Kernel dispatch.

The compiled extension is preferred; set ``ADMM_GCN_PURE=1`` to force the
scipy/numpy fallback. ``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("ADMM_GCN_PURE") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _fallback


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


def _module(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _fallback
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")


def csr_spmm(indptr, indices, data, x, backend=None):
    """Return the product of a CSR matrix with a dense C-ordered matrix."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty((indptr.shape[0] - 1, x.shape[1]), dtype=np.float64)
    _module(backend).csr_spmm(indptr, indices, data, x, out)
    return out


def relu_residual(target, pre, backend=None):
    """Return ``(target - relu(pre), (target - relu(pre)) * [pre > 0])``."""
    target = np.ascontiguousarray(target, dtype=np.float64)
    pre = np.ascontiguousarray(pre, dtype=np.float64)
    resid = np.empty_like(target)
    masked = np.empty_like(target)
    _module(backend).relu_residual(target, pre, resid, masked)
    return resid, masked
