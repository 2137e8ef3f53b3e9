"""Matrix-form backpropagation, mini-batch gradients, and finite-difference oracles.

The error recursion runs backward through the layers,

    D_J = dL/dH (.) sigma'_J(U_J)
    D_j = (W_{j+1}^T D_{j+1}) (.) sigma'_j(U_j)   for j < J

with (.) the Hadamard product, and the gradient of the regularized objective
with respect to block j is D_j Z_{j-1}^T plus the regularizer gradient. All
vec orderings here and in the Newton solve are row-major flattening of W_j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonSmoothError, ShapeError, SizeError, SpecError
from .netcore import Dataset, LayerOutputs, Network, forward

__all__ = [
    "BatchSampler", "BatchStream",
    "delta_recursion", "block_gradient", "all_block_gradients",
    "stochastic_block_gradient", "objective_value", "block_objective_fn",
    "fd_gradient", "block_hessian",
]

_HESSIAN_SIZE_LIMIT = 10_000


# ---------------------------------------------------------------------------
# backprop
# ---------------------------------------------------------------------------

def delta_recursion(net: Network, outs: LayerOutputs, loss, Y: np.ndarray) -> list:
    """Per-layer error matrices; deltas[j-1] has shape (d_j, N)."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != outs.output.shape:
        raise ShapeError(f"Y shape {Y.shape} != output shape {outs.output.shape}")
    depth = net.depth
    deltas = [None] * depth
    grad_h = loss.grad_H(outs.output, Y)
    sig = net.spec.activations[depth - 1].derivative(outs.pre_activations[depth - 1])
    deltas[depth - 1] = grad_h * sig
    for j in range(depth - 1, 0, -1):
        back = net.weights[j].T @ deltas[j]
        deltas[j - 1] = back * net.spec.activations[j - 1].derivative(
            outs.pre_activations[j - 1])
    return deltas


def _data_gradient(deltas: list, outs: LayerOutputs, j: int) -> np.ndarray:
    return deltas[j - 1] @ outs.post_activations[j - 1].T


def block_gradient(net: Network, data: Dataset, loss, j: int,
                   include_reg: bool = True) -> np.ndarray:
    """Gradient of the regularized objective with respect to W_j (1-based j).

    With ``include_reg=False`` only the data term is returned, which is what
    the non-smooth L1 prox path consumes. Requesting the combined gradient
    with an L1 regularizer on layer j raises NonSmoothError.
    """
    _check_layer(net, j)
    outs = forward(net, data.X)
    deltas = delta_recursion(net, outs, loss, data.Y)
    grad = _data_gradient(deltas, outs, j)
    if include_reg:
        reg = net.spec.regularizers[j - 1]
        if not reg.smooth:
            raise NonSmoothError(
                f"layer {j} has an L1 regularizer; request the data term only")
        grad = grad + reg.grad(net.weights[j - 1])
    return grad


def all_block_gradients(net: Network, data: Dataset, loss,
                        outs: LayerOutputs | None = None,
                        include_reg: bool = True) -> list:
    """Gradients for every block from a single backward pass.

    Smooth-regularizer layers get the combined gradient; L1 layers get the
    data term only (their regularizer is handled by the prox step).
    """
    if outs is None:
        outs = forward(net, data.X)
    deltas = delta_recursion(net, outs, loss, data.Y)
    grads = []
    for j in range(1, net.depth + 1):
        g = _data_gradient(deltas, outs, j)
        reg = net.spec.regularizers[j - 1]
        if include_reg and reg.smooth:
            g = g + reg.grad(net.weights[j - 1])
        grads.append(g)
    return grads


def stochastic_block_gradient(net: Network, data: Dataset, loss, j: int,
                              batch, include_reg: bool = True) -> np.ndarray:
    """Mini-batch gradient over the given sample indices.

    The batch is treated as the whole dataset (losses average over |B|), so
    for per-sample-separable losses this is the unbiased mini-batch gradient,
    and with batch = arange(N) the result is bitwise equal to block_gradient.
    """
    batch = np.asarray(batch, dtype=int)
    if batch.size == 0:
        raise SpecError("mini-batch must be nonempty")
    if batch.min() < 0 or batch.max() >= data.n_samples:
        raise SpecError("batch indices out of range")
    return block_gradient(net, data.restrict(batch), loss, j, include_reg)


# ---------------------------------------------------------------------------
# objective helpers
# ---------------------------------------------------------------------------

def objective_value(net: Network, data: Dataset, loss,
                    outs: LayerOutputs | None = None) -> float:
    """Full regularized objective: data loss plus every layer's penalty."""
    if outs is None:
        outs = forward(net, data.X)
    val = loss.value(outs.output, data.Y)
    for reg, w in zip(net.spec.regularizers, net.weights):
        val += reg.value(w)
    return val


def block_objective_fn(net: Network, data: Dataset, loss, j: int):
    """Value and gradient callables of the objective as a function of block j.

    Both close over the frozen remaining blocks; the value includes every
    regularizer (a constant shift for blocks other than j, so minimizers and
    majorization tests are unaffected).
    """
    _check_layer(net, j)

    def value(w):
        return objective_value(net.with_block(j, w), data, loss)

    def grad(w):
        return block_gradient(net.with_block(j, w), data, loss, j)

    return value, grad


def _check_layer(net: Network, j: int) -> None:
    if not 1 <= j <= net.depth:
        raise SpecError(f"layer index {j} outside 1..{net.depth}")


# ---------------------------------------------------------------------------
# finite-difference oracles
# ---------------------------------------------------------------------------

def fd_gradient(objective, W: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Entrywise central-difference gradient of a scalar function of W."""
    if not h > 0:
        raise SpecError("finite-difference step must be positive")
    W = np.asarray(W, dtype=float)
    grad = np.zeros_like(W)
    probe = W.copy()
    for idx in np.ndindex(W.shape):
        orig = probe[idx]
        probe[idx] = orig + h
        f_plus = objective(probe)
        probe[idx] = orig - h
        f_minus = objective(probe)
        probe[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def block_hessian(net: Network, data: Dataset, loss, j: int,
                  h: float = 1e-5) -> np.ndarray:
    """Dense Hessian of the objective in block j, via central differences of
    the analytic gradient.

    Rows and columns are indexed by row-major vec(W_j); the result is
    symmetrized as (H + H^T)/2. Desk-scale only.
    """
    _check_layer(net, j)
    reg = net.spec.regularizers[j - 1]
    if not reg.smooth:
        raise NonSmoothError("block Hessian needs a smooth regularizer")
    w = net.weights[j - 1]
    n = w.size
    if n > _HESSIAN_SIZE_LIMIT:
        raise SizeError(f"block has {n} parameters, over the {_HESSIAN_SIZE_LIMIT} budget")
    hess = np.zeros((n, n))
    probe = net.copy()
    flat = probe.weights[j - 1].reshape(-1)
    for a in range(n):
        orig = flat[a]
        flat[a] = orig + h
        g_plus = block_gradient(probe, data, loss, j).reshape(-1)
        flat[a] = orig - h
        g_minus = block_gradient(probe, data, loss, j).reshape(-1)
        flat[a] = orig
        hess[:, a] = (g_plus - g_minus) / (2.0 * h)
    return (hess + hess.T) / 2.0


# ---------------------------------------------------------------------------
# mini-batch sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchSampler:
    """How sample indices are drawn each iteration.

    Modes: "full" (all samples), "fixed" (batches of batch_size without
    replacement, reshuffling each epoch), "increasing" (batch k has
    min(k, N) samples).
    """

    mode: str = "full"
    batch_size: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("full", "fixed", "increasing"):
            raise SpecError(f"unknown sampler mode {self.mode!r}")
        if self.mode == "fixed" and self.batch_size < 1:
            raise SpecError("fixed sampler needs batch_size >= 1")


class BatchStream:
    """Deterministic index stream: seeded per-epoch shuffles, chunked batches.

    A batch never spans a reshuffle (the remainder of an exhausted epoch is
    dropped), so samples within one batch are always distinct.
    """

    def __init__(self, sampler: BatchSampler, n_samples: int):
        if sampler.mode == "fixed" and sampler.batch_size > n_samples:
            raise SpecError(
                f"batch_size {sampler.batch_size} exceeds N={n_samples}")
        self.sampler = sampler
        self.n = n_samples
        self._rng = np.random.default_rng(sampler.seed)
        self._perm = None
        self._pos = 0

    def _take(self, size: int) -> np.ndarray:
        if self._perm is None or self._pos + size > self.n:
            self._perm = self._rng.permutation(self.n)
            self._pos = 0
        out = self._perm[self._pos:self._pos + size]
        self._pos += size
        return out

    def next(self, k: int) -> np.ndarray:
        """Indices for iteration k (1-based)."""
        if self.sampler.mode == "full":
            return np.arange(self.n)
        if self.sampler.mode == "fixed":
            return self._take(self.sampler.batch_size)
        return self._take(min(k, self.n))
