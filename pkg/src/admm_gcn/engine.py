"""Community-based ADMM for training a GCN.

One outer iteration runs three phases, each reading only values from the
previous phase boundary:

1. weights ``W_l`` for every layer (on the weight agent, from stacked Z, U);
2. activations ``Z_{l,m}`` for every layer and community, from first- and
   second-order messages;
3. multipliers ``U_m``.

Weights and hidden activations take one majorized gradient step whose
step parameter is grown until the quadratic surrogate upper-bounds the
objective at the new point. The output activations solve a smooth,
row-separable problem by accelerated gradient (FISTA).

The functions operating on one community (``first_order_messages``,
``z_phase``, ``update_U`` ...) are the same ones the threaded runtime
calls from its agents; ``outer_iteration`` simply plays every agent in
turn.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .baselines import gcn_forward, init_weights
from .graph import spmm
from .messages import Inbox, build_first_order, build_second_order
from .kernels import relu_residual
from .nnmath import (
    SOFTMAX_CURVATURE,
    log_softmax,
    masked_cross_entropy,
    phi_hidden,
    phi_hidden_grads,
    phi_output,
    phi_output_grads,
    relu,
    softmax,
)
from .problem import Community, Problem
from .seeding import substream

CHECKPOINT_VERSION = 1
# Relative slack on the majorization test; objective values are sums of
# many rounded terms, so an exact comparison can reject a true majorizer
# when the step is at rounding level.
ROUNDING_SLACK = 1e-12


class DivergenceError(ArithmeticError):
    """A step parameter exceeded its cap without satisfying majorization."""


@dataclass(frozen=True)
class Hyperparams:
    nu: float
    rho: float
    hidden: tuple = (16,)
    epochs: int = 50
    fista_iters: int = 10
    growth: float = 2.0
    step_min: float = 1e-6
    step_max: float = 1e12
    tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.growth > 1:
            raise ValueError("backtracking growth factor must exceed 1")
        if self.fista_iters < 1 or self.epochs < 0:
            raise ValueError("fista_iters must be >= 1 and epochs >= 0")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")

    @property
    def layers(self):
        return len(self.hidden) + 1


# -- bookkeeping ---------------------------------------------------------


@dataclass
class StepRecord:
    """One accepted majorized step: surrogate and true value at the new point."""

    kind: str
    k: int
    layer: int
    community: int | None
    param: float
    surrogate: float
    value: float
    trials: int
    slack: float = 0.0

    @property
    def ok(self):
        return self.surrogate >= self.value - self.slack

    @property
    def strict(self):
        return self.surrogate >= self.value


@dataclass
class DualRecord:
    k: int
    community: int
    U_old: np.ndarray
    U_new: np.ndarray
    residual: np.ndarray


class Ledger:
    """Thread-safe log of accepted steps and multiplier updates."""

    def __init__(self, keep_duals=True):
        self.keep_duals = keep_duals
        self.steps: list[StepRecord] = []
        self.duals: list[DualRecord] = []
        self._lock = threading.Lock()

    def add_step(self, rec):
        with self._lock:
            self.steps.append(rec)

    def add_dual(self, rec):
        if self.keep_duals:
            with self._lock:
                self.duals.append(rec)

    def violations(self):
        return [s for s in self.steps if not s.ok]


@dataclass
class ModelState:
    """``Z[l][m]`` for ``l = 0..L`` (``Z[0]`` is the fixed input);
    ``theta[l-1][m]`` for hidden layers ``l = 1..L-1``."""

    W: list
    Z: list
    U: list
    tau: list
    theta: list
    k: int = 0

    @property
    def L(self):
        return len(self.W)

    @property
    def M(self):
        return len(self.U)

    def copy(self):
        return ModelState(
            W=[w.copy() for w in self.W],
            Z=[[z.copy() for z in row] for row in self.Z],
            U=[u.copy() for u in self.U],
            tau=list(self.tau),
            theta=[list(t) for t in self.theta],
            k=self.k,
        )

    def stacked(self, problem: Problem) -> dict:
        """All iterates with activations in original node order."""
        out = {f"W{l + 1}": w for l, w in enumerate(self.W)}
        for l in range(1, self.L + 1):
            out[f"Z{l}"] = problem.to_original(problem.stack(self.Z[l]))
        out["U"] = problem.to_original(problem.stack(self.U))
        return out


def iterate_distance(a: dict, b: dict) -> float:
    """Largest relative Frobenius difference over matching iterates."""
    worst = 0.0
    for key in a:
        den = max(np.linalg.norm(b[key]), np.finfo(float).tiny)
        worst = max(worst, float(np.linalg.norm(a[key] - b[key]) / den))
    return worst


def init_state(problem: Problem, hp: Hyperparams, seed: int = 0) -> ModelState:
    """Fan-in uniform weights, Z from one exact forward pass, U = 0.

    The forward pass runs on the unpartitioned graph, so the starting point
    does not depend on the partition.
    """
    if problem.layers != hp.layers:
        raise ValueError(f"problem has {problem.layers} layers, hyperparameters {hp.layers}")
    W = init_weights(problem.dims, substream(seed, "init"))
    Zs = gcn_forward(W, problem.features, problem.A)
    M = problem.M
    Z = [[z[c.nodes].copy() for c in problem.communities] for z in Zs]
    U = [np.zeros((c.size, problem.dims[-1])) for c in problem.communities]
    return ModelState(
        W=W, Z=Z, U=U,
        tau=[1.0] * hp.layers,
        theta=[[1.0] * M for _ in range(hp.layers - 1)],
        k=0,
    )


# -- majorized gradient step --------------------------------------------


def majorized_step(f, x, fx, grad, prev, hp: Hyperparams, floor=0.0):
    """Gradient step ``x - grad/c`` with the smallest acceptable ``c``.

    ``c`` starts at ``max(prev/growth, step_min, floor)`` and grows by
    ``growth`` until ``f(x) + <grad, dx> + c/2 |dx|^2 >= f(x + dx)``.
    The comparison allows ``ROUNDING_SLACK`` relative to the magnitudes
    involved; a step shorter than the floating-point resolution of ``x``
    is not taken. Returns ``(x_new, c, surrogate, value, trials, slack)``.
    """
    c = max(prev / hp.growth, hp.step_min, floor)
    resolution = 4.0 * np.finfo(np.float64).eps * float(np.linalg.norm(x))
    trials = 0
    while True:
        trials += 1
        if float(np.linalg.norm(grad)) / c <= resolution:
            # step below the spacing of x: a null step, trivially majorized
            return x.copy(), c, fx, fx, trials, 0.0
        x_new = x - grad / c
        dx = x_new - x
        surrogate = fx + float(np.vdot(grad, dx)) + 0.5 * c * float(np.vdot(dx, dx))
        value = f(x_new)
        slack = ROUNDING_SLACK * max(abs(fx), abs(value), abs(surrogate))
        if surrogate >= value - slack:
            return x_new, c, surrogate, value, trials, slack
        c *= hp.growth
        if c > hp.step_max or not math.isfinite(value):
            raise DivergenceError(f"step parameter exceeded {hp.step_max:g} without majorization")


# -- W phase (weight agent) ---------------------------------------------


def update_W(l, W_l, AZ_prev, Z_l, U, tau_prev, hp: Hyperparams, k=0, ledger=None):
    """Majorized step on ``phi`` for layer ``l`` (1-based).

    ``AZ_prev`` is the propagated previous layer, ``A @ Z_{l-1}``, over all
    nodes; ``U`` is the stacked multiplier for the output layer and None
    for hidden layers.
    """
    if U is None:
        def f(W):
            return phi_hidden(W, None, Z_l, None, hp.nu, AZ_prev=AZ_prev)
        grad = phi_hidden_grads(W_l, None, Z_l, None, hp.nu, AZ_prev=AZ_prev, wrt=("W",)).W
    else:
        def f(W):
            return phi_output(W, None, Z_l, U, None, hp.rho, AZ_prev=AZ_prev)
        grad = phi_output_grads(W_l, None, Z_l, U, None, hp.rho, AZ_prev=AZ_prev, wrt=("W",)).W
    W_new, tau, sur, val, trials, slack = majorized_step(f, W_l, f(W_l), grad, tau_prev, hp)
    if ledger is not None:
        ledger.add_step(StepRecord("W", k, l, None, tau, sur, val, trials, slack))
    return W_new, tau


def weight_phase_stacked(problem: Problem, W, tau, Zs, U, hp, k=0, ledger=None, executor=None):
    """``Zs[l-1]`` is stacked ``Z_l`` (community order) for ``l = 1..L``."""
    L = len(W)
    AZ = [problem.AZ0_perm] + [spmm(problem.A_perm, Zs[l - 1]) for l in range(1, L)]

    def one(l):
        return update_W(l, W[l - 1], AZ[l - 1], Zs[l - 1], U if l == L else None,
                        tau[l - 1], hp, k, ledger)

    layers = range(1, L + 1)
    results = list(executor.map(one, layers)) if executor is not None else [one(l) for l in layers]
    return [r[0] for r in results], [r[1] for r in results]


def weight_phase(problem: Problem, state: ModelState, hp, ledger=None, executor=None):
    Zs = [problem.stack(state.Z[l]) for l in range(1, state.L + 1)]
    return weight_phase_stacked(problem, state.W, state.tau, Zs, problem.stack(state.U),
                                hp, state.k, ledger, executor)


# -- messages of one community ------------------------------------------


def first_order_messages(comm: Community, Z_m, W):
    """All ``p[l, m->r]`` for ``l = 0..L-1`` and ``r`` in ``N_m`` plus ``m``."""
    msgs = []
    for l in range(len(W)):
        XW = Z_m[l] @ W[l]
        for dst in comm.closed_neighbors:
            msgs.append(build_first_order(comm, l, dst, Z_m[l], W[l], XW=XW))
    return msgs


def second_order_messages(comm: Community, inbox: Inbox, Z_m, U_m, L):
    """All ``s[l, m->r]`` for hidden layers ``l = 1..L-1``."""
    msgs = []
    for l in range(1, L):
        for dst in comm.neighbors:
            msgs.append(build_second_order(comm, l, dst, inbox, L, Z_m[l + 1],
                                           U_m if l == L - 1 else None))
    return msgs


# -- Z phase ---------------------------------------------------------------


def _spectral_sq(W):
    return float(np.linalg.norm(W, 2)) ** 2


class HiddenZ:
    """Objective of ``Z_{l,m}`` for a hidden layer below the last one.

    own term        nu/2 |X - relu(sum_r p[l-1, r->m])|^2
    next layer      nu/2 |Z_{l+1,m} - relu(A_mm X W + sum_{r in N_m} p[l, r->m])|^2
    neighbor rows   nu/2 |s1 - relu(A_rm X W + s2)|^2  for r in N_m
    """

    def __init__(self, comm: Community, l, inbox: Inbox, Z_next, W_next, nu):
        self.target = relu(inbox.aggregate(l - 1, comm.closed_neighbors))
        self.P = inbox.aggregate(l, comm.neighbors) if comm.neighbors else None
        self.Z_next, self.W, self.nu = Z_next, W_next, nu
        self.own = comm.A_in[comm.index]
        self.nbrs = [(comm.A_out[r], comm.A_in[r], *inbox.second(l, r)) for r in comm.neighbors]

    def _own_pre(self, XW):
        pre = spmm(self.own, XW)
        return pre if self.P is None else pre + self.P

    def value(self, X):

        XW = X @ self.W
        d = X - self.target
        total = float(np.vdot(d, d))
        res, _ = relu_residual(self.Z_next, self._own_pre(XW))
        total += float(np.vdot(res, res))
        for out_blk, _, s1, s2 in self.nbrs:
            res, _ = relu_residual(s1, spmm(out_blk, XW) + s2)
            total += float(np.vdot(res, res))
        return 0.5 * self.nu * total

    def grad(self, X):

        XW = X @ self.W
        _, masked = relu_residual(self.Z_next, self._own_pre(XW))
        back = spmm(self.own, masked)
        for out_blk, in_blk, s1, s2 in self.nbrs:
            _, mk = relu_residual(s1, spmm(out_blk, XW) + s2)
            back = back + spmm(in_blk, mk)
        return self.nu * ((X - self.target) - back @ self.W.T)

    def curvature_floor(self):
        return self.nu * (1.0 + _spectral_sq(self.W))


class PenultimateZ:
    """Objective of ``Z_{L-1,m}``: own relu term plus the output constraint
    of this community and of each neighbor (via ``s = (Z_L,r - rest, U_r)``)."""

    def __init__(self, comm: Community, L, inbox: Inbox, Z_L, U_m, W_L, nu, rho):
        self.target = relu(inbox.aggregate(L - 2, comm.closed_neighbors))
        self.P = inbox.aggregate(L - 1, comm.neighbors) if comm.neighbors else None
        self.Z_L, self.U, self.W, self.nu, self.rho = Z_L, U_m, W_L, nu, rho
        self.own = comm.A_in[comm.index]
        self.nbrs = [(comm.A_out[r], comm.A_in[r], *inbox.second(L - 1, r)) for r in comm.neighbors]

    def _own_resid(self, XW):
        c = spmm(self.own, XW)
        if self.P is not None:
            c = c + self.P
        return self.Z_L - c

    def value(self, X):
        XW = X @ self.W
        d = X - self.target
        r = self._own_resid(XW)
        total = 0.5 * self.nu * float(np.vdot(d, d))
        total += float(np.vdot(self.U, r)) + 0.5 * self.rho * float(np.vdot(r, r))
        for out_blk, _, s1, s2 in self.nbrs:
            rr = s1 - spmm(out_blk, XW)
            total += float(np.vdot(s2, rr)) + 0.5 * self.rho * float(np.vdot(rr, rr))
        return total

    def grad(self, X):
        XW = X @ self.W
        back = spmm(self.own, self.U + self.rho * self._own_resid(XW))
        for out_blk, in_blk, s1, s2 in self.nbrs:
            back = back + spmm(in_blk, s2 + self.rho * (s1 - spmm(out_blk, XW)))
        return self.nu * (X - self.target) - back @ self.W.T

    def curvature_floor(self):
        return self.nu + self.rho * _spectral_sq(self.W)


def _z_step(obj, X, theta_prev, hp, kind_info, ledger):
    k, l, m = kind_info
    X_new, theta, sur, val, trials, slack = majorized_step(
        obj.value, X, obj.value(X), obj.grad(X), theta_prev, hp, floor=obj.curvature_floor()
    )
    if ledger is not None:
        ledger.add_step(StepRecord("Z", k, l, m, theta, sur, val, trials, slack))
    return X_new, theta


def update_Z_hidden(comm, l, inbox, Z_m, W, theta_prev, hp, k=0, ledger=None):
    """``Z_m``/``W`` are this community's activations and the new weights."""
    obj = HiddenZ(comm, l, inbox, Z_m[l + 1], W[l], hp.nu)
    return _z_step(obj, Z_m[l], theta_prev, hp, (k, l, comm.index), ledger)


def update_Z_penultimate(comm, inbox, Z_m, U_m, W, theta_prev, hp, k=0, ledger=None):
    L = len(W)
    obj = PenultimateZ(comm, L, inbox, Z_m[L], U_m, W[L - 1], hp.nu, hp.rho)
    return _z_step(obj, Z_m[L - 1], theta_prev, hp, (k, L - 1, comm.index), ledger)


def output_objective(Z, c, U, Y, train_rows, count, rho):
    r = Z - c
    risk = masked_cross_entropy(Z, Y, train_rows, count) if len(train_rows) else 0.0
    return risk + float(np.vdot(U, r)) + 0.5 * rho * float(np.vdot(r, r))


def output_gradient(Z, c, U, Y, train_rows, count, rho):
    g = U + rho * (Z - c)
    if len(train_rows):
        g[train_rows] += (softmax(Z[train_rows]) - Y[train_rows]) / count
    return g


def output_row_objective(Z, c, U, Y, train_rows, count, rho):
    """Per-row terms of ``output_objective``; they sum to it."""
    r = Z - c
    out = np.sum(U * r + 0.5 * rho * r * r, axis=1)
    if len(train_rows):
        out[train_rows] -= np.sum(Y[train_rows] * log_softmax(Z[train_rows]), axis=1) / count
    return out


def fista_output(Z_start, c, U, Y, train_rows, count, rho, iters, trace=None):
    """Monotone accelerated gradient on the smooth output objective.

    The objective separates by rows, so each row gets its own step,
    ``1/rho`` for unlabeled rows (exact for their quadratic) and
    ``1/(rho + 0.5/count)`` for labeled ones. A row whose momentum step
    would raise its objective by more than ``ROUNDING_SLACK`` keeps its
    previous value. Deciding per row keeps the result independent of how
    rows are grouped into communities; the slack keeps rounding-level
    ties from deciding it.
    """
    step = np.full((Z_start.shape[0], 1), 1.0 / rho)
    if len(train_rows):
        step[train_rows] = 1.0 / (rho + SOFTMAX_CURVATURE / count)
    x = Z_start
    fx = output_row_objective(x, c, U, Y, train_rows, count, rho)
    y = Z_start
    t = 1.0
    for _ in range(iters):
        z = y - step * output_gradient(y, c, U, Y, train_rows, count, rho)
        fz = output_row_objective(z, c, U, Y, train_rows, count, rho)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        keep = fz <= fx + ROUNDING_SLACK * np.maximum(np.abs(fz), np.abs(fx))
        x_new = np.where(keep[:, None], z, x)
        y = x_new + (t / t_new) * (z - x_new) + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, np.where(keep, fz, fx), t_new
        if trace is not None:
            trace.append(float(np.sum(fx)))
    return x


def output_target(comm, inbox, L):
    """``c_m = sum over r in N_m and m of p[L-1, r->m]``."""
    return inbox.aggregate(L - 1, comm.closed_neighbors)


def update_Z_output(comm, inbox, Z_L, U_m, L, hp, count):
    c = output_target(comm, inbox, L)
    return fista_output(Z_L, c, U_m, comm.labels, comm.train_rows, count, hp.rho, hp.fista_iters)


def z_phase(comm, inbox, Z_m, U_m, W, theta_m, hp, count, k=0, ledger=None, executor=None):
    """New ``Z[l]`` for ``l = 1..L`` of one community; every layer reads
    only iteration-k activations, so layers may run concurrently."""
    L = len(W)

    def one(l):
        if l == L:
            return update_Z_output(comm, inbox, Z_m[L], U_m, L, hp, count), None
        if l == L - 1:
            return update_Z_penultimate(comm, inbox, Z_m, U_m, W, theta_m[l - 1], hp, k, ledger)
        return update_Z_hidden(comm, l, inbox, Z_m, W, theta_m[l - 1], hp, k, ledger)

    layers = range(1, L + 1)
    results = list(executor.map(one, layers)) if executor is not None else [one(l) for l in layers]
    new_Z = [Z_m[0]] + [r[0] for r in results]
    new_theta = [r[1] for r in results[:-1]]
    return new_Z, new_theta


# -- U phase ---------------------------------------------------------------


def update_U(comm, inbox, Z_L, U_m, L, rho, k=0, ledger=None):
    """Dual ascent with the iteration-k primal residual ``Z_L - c_m``."""
    resid = Z_L - output_target(comm, inbox, L)
    U_new = U_m + rho * resid
    if ledger is not None:
        ledger.add_dual(DualRecord(k, comm.index, U_m, U_new, resid))
    return U_new, resid


def exchange(problem: Problem, Z_blocks, U, W):
    """Deliver every first- then second-order message of one iteration.

    ``Z_blocks[m][l]`` is ``Z_{l,m}``. Returns the inboxes and the number
    of messages that crossed between communities, by kind.
    """
    M, L = problem.M, len(W)
    comms = problem.communities
    inboxes = [Inbox(m) for m in range(M)]
    counts = {"first_order": 0, "second_order": 0}
    for m in range(M):
        for msg in first_order_messages(comms[m], Z_blocks[m], W):
            inboxes[msg.dst].put(msg)
            counts["first_order"] += msg.src != msg.dst
    for m in range(M):
        for msg in second_order_messages(comms[m], inboxes[m], Z_blocks[m], U[m], L):
            inboxes[msg.dst].put(msg)
            counts["second_order"] += 1
    return inboxes, counts


# -- whole iteration ---------------------------------------------------------


@dataclass
class IterationInfo:
    """``dual_residual`` is the norm of the residual fed to the multiplier
    step; ``residual`` is the primal residual of the new iterate."""

    k: int
    residual: float
    dual_residual: float
    messages: dict = field(default_factory=dict)


def primal_residual(state: ModelState, problem: Problem) -> float:
    """Frobenius norm of ``Z_L - A Z_{L-1} W_L`` over all nodes."""
    L = state.L
    Z_prev = problem.stack(state.Z[L - 1])
    r = problem.stack(state.Z[L]) - spmm(problem.A_perm, Z_prev) @ state.W[L - 1]
    return float(np.linalg.norm(r))


def outer_iteration(state: ModelState, problem: Problem, hp: Hyperparams, ledger=None):
    """One pass of W, Z and U phases; returns ``(new_state, info)``."""
    L, M, k = state.L, state.M, state.k
    comms = problem.communities
    W_new, tau_new = weight_phase(problem, state, hp, ledger)

    Z_blocks = [[state.Z[l][m] for l in range(L + 1)] for m in range(M)]
    inboxes, counts = exchange(problem, Z_blocks, state.U, W_new)

    new = state.copy()
    new.W, new.tau = W_new, tau_new
    resid_sq = 0.0
    for m in range(M):
        theta_m = [state.theta[l][m] for l in range(L - 1)]
        Z_m, theta_m = z_phase(comms[m], inboxes[m], Z_blocks[m], state.U[m], W_new, theta_m,
                               hp, problem.train_count, k, ledger)
        for l in range(1, L + 1):
            new.Z[l][m] = Z_m[l]
        for l in range(L - 1):
            new.theta[l][m] = theta_m[l]
        new.U[m], resid = update_U(comms[m], inboxes[m], state.Z[L][m], state.U[m], L, hp.rho, k, ledger)
        resid_sq += float(np.vdot(resid, resid))
    new.k = k + 1
    return new, IterationInfo(k, primal_residual(new, problem), math.sqrt(resid_sq), counts)


def augmented_lagrangian(state: ModelState, problem: Problem, hp: Hyperparams) -> float:
    """Risk + nu-penalties + multiplier and rho terms, summed by community."""
    L = state.L
    total = 0.0
    for c in problem.communities:
        m = c.index
        total += masked_cross_entropy(state.Z[L][m], c.labels, c.train_rows, problem.train_count) \
            if len(c.train_rows) else 0.0
        for l in range(1, L + 1):
            pre = None
            for r in c.closed_neighbors:
                term = spmm(c.A_in[r], state.Z[l - 1][r] @ state.W[l - 1])
                pre = term if pre is None else pre + term
            if l < L:
                d = state.Z[l][m] - relu(pre)
                total += 0.5 * hp.nu * float(np.vdot(d, d))
            else:
                r_ = state.Z[L][m] - pre
                total += float(np.vdot(state.U[m], r_)) + 0.5 * hp.rho * float(np.vdot(r_, r_))
    return total


def fit(problem: Problem, hp: Hyperparams, state=None, seed=0, ledger=None, callback=None, epochs=None):
    """Run outer iterations until the epoch budget or the residual tolerance."""
    state = init_state(problem, hp, seed) if state is None else state
    for epoch in range(hp.epochs if epochs is None else epochs):
        state, info = outer_iteration(state, problem, hp, ledger)
        if callback is not None:
            callback(epoch, state, info)
        if info.residual < hp.tol:
            break
    return state


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(state: ModelState, path):
    """Write every block with its shape; ``load_checkpoint`` restores it exactly."""
    arrays = {
        "version": np.array(CHECKPOINT_VERSION),
        "k": np.array(state.k),
        "tau": np.asarray(state.tau, dtype=np.float64),
        "theta": np.asarray(state.theta, dtype=np.float64).reshape(state.L - 1, state.M),
        "L": np.array(state.L),
        "M": np.array(state.M),
    }
    for l, w in enumerate(state.W):
        arrays[f"W_{l}"] = w
    for l, row in enumerate(state.Z):
        for m, z in enumerate(row):
            arrays[f"Z_{l}_{m}"] = z
    for m, u in enumerate(state.U):
        arrays[f"U_{m}"] = u
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> ModelState:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        L, M = int(data["L"]), int(data["M"])
        return ModelState(
            W=[data[f"W_{l}"] for l in range(L)],
            Z=[[data[f"Z_{l}_{m}"] for m in range(M)] for l in range(L + 1)],
            U=[data[f"U_{m}"] for m in range(M)],
            tau=[float(t) for t in data["tau"]],
            theta=[[float(t) for t in row] for row in data["theta"]],
            k=int(data["k"]),
        )
