"""End-to-end backprop training of the same GCN with SGD-family optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import SparseMatrix, spmm
from .nnmath import masked_cross_entropy_grad, relu

KINDS = ("gd", "adam", "adagrad", "adadelta")
DEFAULT_LR = {"gd": 1e-1, "adam": 1e-3, "adagrad": 1e-3, "adadelta": 1e-3}


def init_weights(dims, rng):
    """Uniform fan-in scaling, ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``."""
    out = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / fan_in)
        out.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
    return out


def gcn_forward(W, Z0, A: SparseMatrix):
    """Layer outputs ``[Z_0, Z_1, ..., Z_L]``; the last layer is linear."""
    Zs = [np.asarray(Z0, dtype=np.float64)]
    for l, W_l in enumerate(W, start=1):
        if Zs[-1].shape[1] != W_l.shape[0]:
            raise ValueError(f"layer {l}: input width {Zs[-1].shape[1]} != W rows {W_l.shape[0]}")
        pre = spmm(A, Zs[-1]) @ W_l
        Zs.append(pre if l == len(W) else relu(pre))
    return Zs


def gcn_backward(W, Zs, Y, mask, A: SparseMatrix, count=None):
    """Gradients of the masked risk with respect to every ``W_l``.

    Uses ``A^T = A``. A hidden output is positive exactly where its
    pre-activation is, so ``Zs`` alone carries the ReLU masks.
    """
    L = len(W)
    G = masked_cross_entropy_grad(Zs[L], Y, mask, count)
    grads = [None] * L
    for l in range(L, 0, -1):
        grads[l - 1] = spmm(A, Zs[l - 1]).T @ G
        if l > 1:
            G = spmm(A, G @ W[l - 1].T) * (Zs[l - 1] > 0.0)
    return grads


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str
    lr: float = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = None
    decay: float = 0.9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}; choose from {KINDS}")
        if self.lr is None:
            object.__setattr__(self, "lr", DEFAULT_LR[self.kind])
        if self.eps is None:
            object.__setattr__(self, "eps", 1e-6 if self.kind == "adadelta" else 1e-8)
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


@dataclass
class Slots:
    t: int = 0
    first: list = field(default_factory=list)
    second: list = field(default_factory=list)


def optimizer_step(cfg: OptimizerConfig, params, grads, slots: Slots | None = None):
    """One update; returns ``(new_params, slots)``. Slots start at zero."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    if slots is None:
        slots = Slots()
    if not slots.first:
        slots.first = [np.zeros_like(p) for p in params]
        slots.second = [np.zeros_like(p) for p in params]
    slots.t += 1
    t = slots.t
    new = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if cfg.kind == "gd":
            new.append(p - cfg.lr * g)
        elif cfg.kind == "adam":
            m = slots.first[i] = cfg.beta1 * slots.first[i] + (1 - cfg.beta1) * g
            v = slots.second[i] = cfg.beta2 * slots.second[i] + (1 - cfg.beta2) * g * g
            m_hat = m / (1 - cfg.beta1 ** t)
            v_hat = v / (1 - cfg.beta2 ** t)
            new.append(p - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps))
        elif cfg.kind == "adagrad":
            acc = slots.second[i] = slots.second[i] + g * g
            new.append(p - cfg.lr * g / (np.sqrt(acc) + cfg.eps))
        else:  # adadelta; lr scales the step as in common frameworks
            sq = slots.second[i] = cfg.decay * slots.second[i] + (1 - cfg.decay) * g * g
            delta = np.sqrt(slots.first[i] + cfg.eps) / np.sqrt(sq + cfg.eps) * g
            slots.first[i] = cfg.decay * slots.first[i] + (1 - cfg.decay) * delta * delta
            new.append(p - cfg.lr * delta)
    return new, slots
