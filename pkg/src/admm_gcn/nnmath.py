"""Dense kernels, masked risk, and hand-derived gradients.

``phi_hidden`` and ``phi_output`` are the per-layer pieces of the augmented
Lagrangian seen by the weight updates:

    phi_hidden = nu/2 * ||Z_l - relu(A Z_{l-1} W_l)||^2
    phi_output = <U, Z_L - A Z_{L-1} W_L> + rho/2 * ||Z_L - A Z_{L-1} W_L||^2

Every gradient here is checked against central differences in the tests.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import kernels
from .graph import SparseMatrix, spmm

SOFTMAX_CURVATURE = 0.5  # spectral bound of diag(p) - p p^T


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad_mask(x):
    """1 where ``x > 0``; the subgradient at 0 is taken as 0."""
    return (np.asarray(x) > 0.0).astype(np.float64)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _mask_index(mask, count):
    mask = np.asarray(mask, dtype=np.int64)
    if count is None:
        count = mask.size
    if count == 0:
        raise ValueError("masked_cross_entropy needs a non-empty mask")
    return mask, count


def masked_cross_entropy(z, y, mask, count=None) -> float:
    """Mean over masked rows of ``-sum_c y_c log softmax(z)_c``.

    ``count`` overrides the denominator; a community slice passes the
    global training-set size so that per-community risks add up to the
    full risk.
    """
    mask, count = _mask_index(mask, count)
    if mask.size == 0:
        return 0.0
    return float(-np.sum(y[mask] * log_softmax(z[mask])) / count)


def masked_cross_entropy_grad(z, y, mask, count=None):
    mask, count = _mask_index(mask, count)
    g = np.zeros_like(z, dtype=np.float64)
    if mask.size:
        g[mask] = (softmax(z[mask]) - y[mask]) / count
    return g


def accuracy(z, y, mask) -> float:
    """Fraction of masked rows whose argmax (lowest index on ties) is right."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        return float("nan")
    return float(np.mean(np.argmax(z[mask], axis=1) == np.argmax(y[mask], axis=1)))


def _check(cond, msg):
    if not cond:
        raise ValueError(msg)


def _propagate(A, Z_prev, AZ_prev):
    if AZ_prev is None:
        _check(A.cols == Z_prev.shape[0], f"shape mismatch: A {A.shape}, Z_prev {Z_prev.shape}")
        AZ_prev = spmm(A, Z_prev)
    return AZ_prev


ALL = ("W", "Z_prev", "Z")


class PhiGrads(NamedTuple):
    W: np.ndarray
    Z_prev: np.ndarray
    Z: np.ndarray


def phi_hidden(W, Z_prev, Z, A: SparseMatrix, nu, AZ_prev=None) -> float:
    AZ = _propagate(A, Z_prev, AZ_prev)
    _check(AZ.shape[1] == W.shape[0] and Z.shape == (AZ.shape[0], W.shape[1]),
           f"shape mismatch: AZ {AZ.shape}, W {W.shape}, Z {Z.shape}")
    resid, _ = kernels.relu_residual(Z, AZ @ W)
    return 0.5 * nu * float(np.vdot(resid, resid))


def phi_hidden_grads(W, Z_prev, Z, A: SparseMatrix, nu, AZ_prev=None, wrt=ALL) -> PhiGrads:
    """Gradients of ``phi_hidden``; entries not named in ``wrt`` are None.

    ``A`` must be symmetric (it is transposed implicitly).
    """
    AZ = _propagate(A, Z_prev, AZ_prev)
    resid, masked = kernels.relu_residual(Z, AZ @ W)
    return PhiGrads(
        W=-nu * (AZ.T @ masked) if "W" in wrt else None,
        Z_prev=-nu * spmm(A, masked @ W.T) if "Z_prev" in wrt else None,
        Z=nu * resid if "Z" in wrt else None,
    )


def phi_output(W, Z_prev, Z, U, A: SparseMatrix, rho, AZ_prev=None) -> float:
    AZ = _propagate(A, Z_prev, AZ_prev)
    _check(AZ.shape[1] == W.shape[0] and Z.shape == (AZ.shape[0], W.shape[1]) and U.shape == Z.shape,
           f"shape mismatch: AZ {AZ.shape}, W {W.shape}, Z {Z.shape}, U {U.shape}")
    r = Z - AZ @ W
    return float(np.vdot(U, r)) + 0.5 * rho * float(np.vdot(r, r))


def phi_output_grads(W, Z_prev, Z, U, A: SparseMatrix, rho, AZ_prev=None, wrt=ALL) -> PhiGrads:
    AZ = _propagate(A, Z_prev, AZ_prev)
    dual = U + rho * (Z - AZ @ W)
    return PhiGrads(
        W=-(AZ.T @ dual) if "W" in wrt else None,
        Z_prev=-spmm(A, dual @ W.T) if "Z_prev" in wrt else None,
        Z=dual if "Z" in wrt else None,
    )
