"""Independent dense references for message payloads and the engine."""

import numpy as np

from admm_gcn import engine
from admm_gcn.messages import Kind
from admm_gcn.nnmath import log_softmax, relu

from .conftest import random_instance, random_state


def dense_blocks(A, prob):
    d = A.to_dense()
    mem = prob.partition.members
    return lambda m, r: d[np.ix_(mem[m], mem[r])]


def message_trial(rng):
    """Worst absolute deviation of p sums and s payloads from their
    dense definitions on one random instance (2 or 3 communities)."""
    M = int(rng.integers(2, 4))
    n = int(rng.integers(3 * M, 61))
    L = int(rng.integers(2, 4))
    dims = tuple(int(x) for x in rng.integers(1, 5, size=L + 1))
    _, A, prob = random_instance(rng, n=n, M=M, dims=dims, p=float(rng.uniform(0.05, 0.3)))
    st = random_state(prob, rng)
    blocks = [[st.Z[l][m] for l in range(L + 1)] for m in range(M)]
    inboxes, _ = engine.exchange(prob, blocks, st.U, st.W)
    blk = dense_blocks(A, prob)
    full = A.to_dense()
    worst = 0.0
    for m, c in enumerate(prob.communities):
        rows = prob.partition.members[m]
        for l in range(L):
            Zl = prob.to_original(prob.stack(st.Z[l]))
            mono = (full @ Zl @ st.W[l])[rows]
            got = inboxes[m].aggregate(l, c.closed_neighbors)
            worst = max(worst, float(np.max(np.abs(got - mono), initial=0.0)))
        for r in c.neighbors:
            rc = prob.communities[r]
            for l in range(1, L):
                others = [q for q in rc.closed_neighbors if q != m]
                direct = sum((blk(r, q) @ st.Z[l][q] @ st.W[l] for q in others),
                             np.zeros((rc.size, dims[l + 1])))
                s1, s2 = inboxes[m].get(Kind.SECOND_ORDER, l, r).payload
                if l < L - 1:
                    e1, e2 = st.Z[l + 1][r], direct
                else:
                    e1, e2 = st.Z[L][r] - direct, st.U[r]
                worst = max(worst, float(np.max(np.abs(s1 - e1), initial=0.0)),
                            float(np.max(np.abs(s2 - e2), initial=0.0)))
    return worst


def _backtrack(f, x, g, prev, hp, floor=0.0):
    c = max(prev / hp.growth, hp.step_min, floor)
    fx = f(x)
    while True:
        if np.linalg.norm(g) / c <= 4 * np.finfo(float).eps * np.linalg.norm(x):
            return x.copy(), c
        xn = x - g / c
        d = xn - x
        sur = fx + np.sum(g * d) + 0.5 * c * np.sum(d * d)
        val = f(xn)
        if sur >= val - engine.ROUNDING_SLACK * max(abs(fx), abs(val), abs(sur)):
            return xn, c
        c *= hp.growth


def monolithic_iteration(prob, state, hp):
    """One outer iteration of a two-layer model on dense full matrices
    (M = 1), written from the update formulas alone."""
    assert prob.M == 1 and state.L == 2
    A = prob.A_perm.to_dense()
    Z0, Z1, Z2 = (state.Z[l][0] for l in range(3))
    U = state.U[0]
    W1, W2 = state.W
    nu, rho = hp.nu, hp.rho

    AZ0, AZ1 = A @ Z0, A @ Z1
    pre = AZ0 @ W1
    g1 = -nu * AZ0.T @ ((Z1 - relu(pre)) * (pre > 0))
    W1n, t1 = _backtrack(lambda w: 0.5 * nu * np.sum((Z1 - relu(AZ0 @ w)) ** 2), W1, g1, state.tau[0], hp)
    g2 = -AZ1.T @ (U + rho * (Z2 - AZ1 @ W2))

    def f2(w):
        r = Z2 - AZ1 @ w
        return np.sum(U * r) + 0.5 * rho * np.sum(r * r)
    W2n, t2 = _backtrack(f2, W2, g2, state.tau[1], hp)

    target = relu(AZ0 @ W1n)

    def psi(z):
        r = Z2 - A @ z @ W2n
        return 0.5 * nu * np.sum((z - target) ** 2) + np.sum(U * r) + 0.5 * rho * np.sum(r * r)
    gz = nu * (Z1 - target) - A.T @ (U + rho * (Z2 - A @ Z1 @ W2n)) @ W2n.T
    floor = nu + rho * np.linalg.norm(W2n, 2) ** 2
    Z1n, th = _backtrack(psi, Z1, gz, state.theta[0][0], hp, floor)

    c = AZ1 @ W2n
    c_rows = prob.communities[0].train_rows
    Y = prob.communities[0].labels
    step = np.full((Z2.shape[0], 1), 1 / rho)
    step[c_rows] = 1 / (rho + 0.5 / prob.train_count)
    def obj(z):
        r = z - c
        out = np.sum(U * r + 0.5 * rho * r * r, axis=1)
        out[c_rows] -= np.sum(Y[c_rows] * log_softmax(z[c_rows]), axis=1) / prob.train_count
        return out
    x = y = Z2
    fx = obj(x)
    t = 1.0
    for _ in range(hp.fista_iters):
        g = U + rho * (y - c)
        sm = np.exp(y[c_rows] - y[c_rows].max(axis=1, keepdims=True))
        g[c_rows] += (sm / sm.sum(axis=1, keepdims=True) - Y[c_rows]) / prob.train_count
        z = y - step * g
        fz = obj(z)
        tn = (1 + np.sqrt(1 + 4 * t * t)) / 2
        keep = fz <= fx + engine.ROUNDING_SLACK * np.maximum(np.abs(fz), np.abs(fx))
        xn, fn = np.where(keep[:, None], z, x), np.where(keep, fz, fx)
        y = xn + t / tn * (z - xn) + (t - 1) / tn * (xn - x)
        x, fx, t = xn, fn, tn
    Un = U + rho * (Z2 - c)
    return dict(W1=W1n, W2=W2n, Z1=Z1n, Z2=x, U=Un, tau=[t1, t2], theta=th)


def monolithic_z_grad(prob, state, l, nu, rho):
    """Gradient of the whole Lagrangian with respect to ``Z_l`` (original
    node order), for a hidden layer ``1 <= l <= L-1``."""
    A = prob.A.to_dense()
    L = state.L
    full = [prob.to_original(prob.stack(state.Z[j])) for j in range(L + 1)]
    U = prob.to_original(prob.stack(state.U))
    W = state.W
    g = nu * (full[l] - relu(A @ full[l - 1] @ W[l - 1]))
    if l < L - 1:
        pre = A @ full[l] @ W[l]
        g -= nu * A @ ((full[l + 1] - relu(pre)) * (pre > 0)) @ W[l].T
    else:
        g -= A @ (U + rho * (full[L] - A @ full[l] @ W[l])) @ W[l].T
    return g
