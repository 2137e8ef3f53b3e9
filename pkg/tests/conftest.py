"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's matrix code paths: forward
and backward passes are re-derived with explicit per-sample, per-entry Python
loops so they can arbitrate the vectorized implementations.
"""

import numpy as np
import pytest

from bsumnet import Dataset, NetworkSpec, Regularizer, build_network


def scalar_forward(net, X):
    """Per-sample, per-entry forward pass. Returns (pre, post) lists where
    pre[j-1][n] and post[j][n] are plain Python lists for sample n."""
    n_samples = X.shape[1]
    pre = [[None] * n_samples for _ in range(net.depth)]
    post = [[None] * n_samples for _ in range(net.depth + 1)]
    for n in range(n_samples):
        z = [float(X[i, n]) for i in range(X.shape[0])]
        post[0][n] = z
        for j in range(1, net.depth + 1):
            w = net.weights[j - 1]
            u = []
            for r in range(w.shape[0]):
                acc = 0.0
                for c in range(w.shape[1]):
                    acc += float(w[r, c]) * z[c]
                u.append(acc)
            act = net.spec.activations[j - 1]
            znew = [float(act.value(np.array([[v]]))[0, 0]) for v in u]
            pre[j - 1][n] = u
            post[j][n] = znew
            z = znew
    return pre, post


def scalar_output(net, X):
    """Network output via the scalar-loop oracle, as a (dJ, N) array."""
    _, post = scalar_forward(net, X)
    n_samples = X.shape[1]
    d_out = net.spec.dims[-1]
    out = np.zeros((d_out, n_samples))
    for n in range(n_samples):
        for i in range(d_out):
            out[i, n] = post[-1][n][i]
    return out


def scalar_deltas(net, X, Y, loss):
    """Per-sample backward recursion with explicit loops.

    Columns of the returned matrices are the per-sample error vectors built
    from the columns of the total-loss gradient, so they are directly
    comparable with the matrix recursion.
    """
    pre, post = scalar_forward(net, X)
    n_samples = X.shape[1]
    h = scalar_output(net, X)
    grad_h = loss.grad_H(h, Y)
    deltas = [np.zeros((net.spec.dims[j + 1], n_samples))
              for j in range(net.depth)]
    for n in range(n_samples):
        act = net.spec.activations[net.depth - 1]
        u_last = pre[net.depth - 1][n]
        d = [float(grad_h[i, n]) * float(act.derivative(np.array([[u_last[i]]]))[0, 0])
             for i in range(len(u_last))]
        for i, v in enumerate(d):
            deltas[net.depth - 1][i, n] = v
        for j in range(net.depth - 1, 0, -1):
            w_next = net.weights[j]
            act = net.spec.activations[j - 1]
            u = pre[j - 1][n]
            d_prev = []
            for c in range(w_next.shape[1]):
                acc = 0.0
                for r in range(w_next.shape[0]):
                    acc += float(w_next[r, c]) * d[r]
                sig = float(act.derivative(np.array([[u[c]]]))[0, 0])
                d_prev.append(acc * sig)
            for i, v in enumerate(d_prev):
                deltas[j - 1][i, n] = v
            d = d_prev
    return deltas


def scalar_block_gradient(net, X, Y, loss, j, reg=None):
    """Sum of per-sample outer products delta_j^n z_{j-1}^n', plus the
    regularizer gradient when given."""
    deltas = scalar_deltas(net, X, Y, loss)
    _, post = scalar_forward(net, X)
    w = net.weights[j - 1]
    grad = np.zeros_like(w)
    for n in range(X.shape[1]):
        for r in range(w.shape[0]):
            for c in range(w.shape[1]):
                grad[r, c] += deltas[j - 1][r, n] * post[j - 1][n][c]
    if reg is not None and reg.kind == "l2":
        grad += 2.0 * reg.lam * w
    return grad


def labels_for(loss, d_out, n, rng):
    """Targets drawn from the loss's valid label domain."""
    name = loss.name
    if name == "cross_entropy":
        return (rng.random((d_out, n)) < 0.5).astype(float)
    if name in ("squared_hinge", "logistic"):
        return np.where(rng.random((d_out, n)) < 0.5, -1.0, 1.0)
    return rng.standard_normal((d_out, n))


def make_problem(dims, activation, loss, lam=1e-3, seed=0, n=12,
                 feasible=None, reg=None, init_scale=None):
    """Random network + domain-valid dataset for a given loss/activation."""
    rng = np.random.default_rng(seed)
    regularizer = reg if reg is not None else Regularizer.l2(lam)
    spec = NetworkSpec.homogeneous(dims, activation, regularizer=regularizer,
                                   feasible=feasible)
    net = build_network(spec, "uniform", seed=seed + 1, scale=init_scale)
    X = rng.standard_normal((dims[0], n))
    Y = labels_for(loss, dims[-1], n, rng)
    return net, Dataset(X, Y)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def ridge_oracle(X, Y, lam):
    """Textbook single-layer ridge solution Y X' (X X' + N lam I)^{-1}."""
    n = X.shape[1]
    return Y @ X.T @ np.linalg.inv(X @ X.T + n * lam * np.eye(X.shape[0]))


def kron_block_oracle(net, data, j, lam):
    """Eigendecomposition route to the linear-network block minimizer.

    Independent of the library's normal-equation solve: diagonalize A'A and
    BB', divide by the shifted eigenvalue products, rotate back.
    """
    d_out = net.spec.dims[-1]
    a = np.eye(d_out)
    for w in net.weights[j:][::-1]:
        a = a @ w
    b = data.X
    for w in net.weights[:j - 1]:
        b = w @ b
    n = data.n_samples
    sa, ua = np.linalg.eigh(a.T @ a)
    sb, ub = np.linalg.eigh(b @ b.T)
    c = a.T @ data.Y @ b.T / n
    ct = ua.T @ c @ ub
    denom = sa[:, None] * sb[None, :] / n + lam
    wt = ct / denom
    return ua @ wt @ ub.T


def brute_force_prox_scalar(a, tau, lo=-50.0, hi=50.0):
    """1-D prox of tau*|x| at a: ternary search on the convex objective in
    exact rational arithmetic, so comparisons never suffer float cancellation
    and the minimizer is located far below the 1e-8 comparison tolerance."""
    from fractions import Fraction

    a = Fraction(a)
    tau = Fraction(tau)

    def obj(x):
        return (x - a) * (x - a) / 2 + tau * abs(x)

    left, right = Fraction(lo), Fraction(hi)
    for _ in range(160):
        third = (right - left) / 3
        m1 = left + third
        m2 = right - third
        if obj(m1) <= obj(m2):
            right = m2
        else:
            left = m1
    return float((left + right) / 2)
