"""Convex surrogate families and their block minimizers.

Each family produces, around the current iterate, a strongly convex model of
the block objective whose minimizer is the descent direction:

  first-order prox : f + <g, W - Wk> + (gamma/2)||W - Wk||^2  ->  Wk - g/gamma
  second-order prox: adds (1/2)(W-Wk)' Hess (W-Wk)            ->  damped Newton
  proximal         : f_j(W) + (gamma/2)||W - Wk||^2           ->  inner solver
  linear           : f + <g, W - Wk>  (concave blocks only)   ->  -g

plus the soft-threshold step that absorbs a non-smooth L1 penalty, and the
closed-form block solve available when every activation is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import CurvatureError, SingularError, SpecError
from .functions import BlockCurvature
from .netcore import Dataset, FeasibleSet, Network, Unconstrained

__all__ = [
    "InnerSolverConfig", "FirstOrderProx", "SecondOrderProx", "Proximal",
    "LinearBound", "Anchor",
    "project_feasible",
    "descent_direction_first_order", "descent_direction_second_order",
    "descent_direction_proximal", "descent_direction_linear",
    "first_order_direction_backtracked",
    "prox_l1_step", "evaluate_upperbound", "closed_form_linear_block",
]


# ---------------------------------------------------------------------------
# configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InnerSolverConfig:
    """Projected-gradient settings for the proximal subproblem."""

    max_iters: int = 500
    grad_tol: float = 1e-8
    shrink: float = 0.5
    slope: float = 1e-4
    step_init: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise SpecError("inner solver needs max_iters >= 1")
        if not (self.grad_tol > 0 and 0 < self.shrink < 1 and 0 < self.slope < 1
                and self.step_init > 0):
            raise SpecError("inner solver tolerances/backtracking params out of range")


def _check_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise SpecError(f"gamma must be positive, got {gamma}")


@dataclass(frozen=True)
class FirstOrderProx:
    gamma: float = 1.0
    name = "first_order_prox"

    def __post_init__(self):
        _check_gamma(self.gamma)


@dataclass(frozen=True)
class SecondOrderProx:
    gamma: float = 1.0
    name = "second_order_prox"

    def __post_init__(self):
        _check_gamma(self.gamma)


@dataclass(frozen=True)
class Proximal:
    gamma: float = 1.0
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    name = "proximal"

    def __post_init__(self):
        _check_gamma(self.gamma)


@dataclass(frozen=True)
class LinearBound:
    name = "linear"


@dataclass
class Anchor:
    """Everything about the current iterate a surrogate needs.

    ``f_value`` is the full regularized objective at the anchor, ``grad`` the
    block gradient there. ``hess`` (vec-space, row-major) is required by the
    second-order family, ``f_fn`` (block objective value) by the proximal one.
    """

    w: np.ndarray
    f_value: float
    grad: np.ndarray
    hess: np.ndarray | None = None
    f_fn: object | None = None


# ---------------------------------------------------------------------------
# projections and directions
# ---------------------------------------------------------------------------

def project_feasible(feasible: FeasibleSet, W: np.ndarray) -> np.ndarray:
    """Orthogonal (Frobenius) projection onto the feasible set; idempotent."""
    return feasible.project(np.asarray(W, dtype=float))


def descent_direction_first_order(W: np.ndarray, grad: np.ndarray, gamma: float,
                                  feasible: FeasibleSet = Unconstrained()) -> np.ndarray:
    """Minimizer of the first-order proximal surrogate: project(W - grad/gamma)."""
    _check_gamma(gamma)
    return project_feasible(feasible, W - grad / gamma)


def descent_direction_second_order(W: np.ndarray, grad: np.ndarray,
                                   hess: np.ndarray, gamma: float,
                                   max_doublings: int = 50) -> np.ndarray:
    """Damped Newton direction: W - (hess + gamma I)^{-1} grad in vec space.

    The damped system is solved by Cholesky; if it is not positive definite,
    gamma is doubled and the solve retried, Levenberg-Marquardt style.
    """
    _check_gamma(gamma)
    n = W.size
    if hess.shape != (n, n):
        raise SpecError(f"Hessian shape {hess.shape} incompatible with block size {n}")
    rhs = grad.reshape(-1)
    for _ in range(max_doublings + 1):
        try:
            factor = scipy.linalg.cho_factor(hess + gamma * np.eye(n))
        except np.linalg.LinAlgError:
            gamma *= 2.0
            continue
        step = scipy.linalg.cho_solve(factor, rhs)
        return W - step.reshape(W.shape)
    raise CurvatureError(
        f"damped Hessian not positive definite after {max_doublings} gamma doublings")


def descent_direction_proximal(value_fn, grad_fn, W: np.ndarray, gamma: float,
                               feasible: FeasibleSet = Unconstrained(),
                               cfg: InnerSolverConfig = InnerSolverConfig()):
    """Approximate prox of the block objective: argmin f(V) + (gamma/2)||V - W||^2.

    Projected gradient with backtracking from the warm start V = W. Returns
    (point, converged); the point never has a worse prox objective than W
    itself, so every outer step built on it is a descent step. gamma = 0 is
    allowed and minimizes the block objective itself (exact BCD).
    """
    if gamma < 0:
        raise SpecError(f"gamma must be >= 0, got {gamma}")
    center = np.asarray(W, dtype=float)

    def phi(v):
        pen = 0.5 * gamma * float(np.sum((v - center) ** 2))
        try:
            return value_fn(v) + pen
        except OverflowError:
            return math.inf

    v = project_feasible(feasible, center)
    phi_v = phi(v)
    best, best_val = v, phi_v
    step = cfg.step_init
    converged = False
    for _ in range(cfg.max_iters):
        g = grad_fn(v) + gamma * (v - center)
        step = min(step / cfg.shrink, 1e6)  # let the step grow back
        accepted = False
        while step > 1e-18:
            cand = project_feasible(feasible, v - step * g)
            decrease = float(np.sum(g * (cand - v)))
            cand_phi = phi(cand)
            if cand_phi <= phi_v + cfg.slope * decrease and math.isfinite(cand_phi):
                accepted = True
                break
            step *= cfg.shrink
        if not accepted:
            break
        move = float(np.linalg.norm(cand - v)) / step
        v, phi_v = cand, cand_phi
        if phi_v < best_val:
            best, best_val = v, phi_v
        if move <= cfg.grad_tol:
            converged = True
            break
    return best, converged


def descent_direction_linear(W: np.ndarray, grad: np.ndarray,
                             curvature: BlockCurvature,
                             override: bool = False) -> np.ndarray:
    """Direction from the linear surrogate on concave blocks: -grad.

    The trainer's convex-combination update then reads
    (1-alpha) W - alpha * grad. Using it on a block not flagged concave is an
    error unless explicitly overridden.
    """
    if not curvature.is_concave and not override:
        raise CurvatureError(
            "linear surrogate requires a concave block (or override=True)")
    return -np.asarray(grad, dtype=float)


def first_order_direction_backtracked(W: np.ndarray, grad: np.ndarray,
                                      gamma0: float, feasible: FeasibleSet,
                                      f_block_value, f_anchor: float,
                                      max_doublings: int = 50):
    """First-order direction with gamma doubled until the surrogate majorizes.

    Accepts the smallest gamma = gamma0 * 2^m whose candidate direction D
    satisfies g(D) >= f_j(D), so the surrogate is a true local upper bound at
    the point that matters. Returns (D, gamma).
    """
    _check_gamma(gamma0)
    gamma = gamma0
    for _ in range(max_doublings + 1):
        d = descent_direction_first_order(W, grad, gamma, feasible)
        diff = d - W
        g_at_d = (f_anchor + float(np.sum(grad * diff))
                  + 0.5 * gamma * float(np.sum(diff * diff)))
        try:
            f_at_d = f_block_value(d)
        except OverflowError:
            # candidate left the representable range: certainly not majorized
            gamma *= 2.0
            continue
        if g_at_d >= f_at_d - 1e-12 * max(1.0, abs(f_at_d)):
            return d, gamma
        gamma *= 2.0
    raise CurvatureError(
        f"no majorizing gamma found after {max_doublings} doublings from {gamma0}")


def prox_l1_step(W: np.ndarray, grad_smooth: np.ndarray, gamma: float,
                 lam: float) -> np.ndarray:
    """Soft-threshold step absorbing an L1 penalty of strength lam.

    Shrinks each entry of W - grad_smooth/gamma toward zero by lam/gamma;
    entries within the threshold map to exactly 0.0.
    """
    _check_gamma(gamma)
    if lam < 0:
        raise SpecError(f"lam must be >= 0, got {lam}")
    a = np.asarray(W, dtype=float) - np.asarray(grad_smooth, dtype=float) / gamma
    t = lam / gamma
    return np.where(a > t, a - t, np.where(a < -t, a + t, 0.0))


# ---------------------------------------------------------------------------
# surrogate evaluation (for the tangency/consistency/majorization checks)
# ---------------------------------------------------------------------------

def evaluate_upperbound(kind, W: np.ndarray, anchor: Anchor) -> float:
    """Value of the surrogate g_j at W, anchored at the current iterate."""
    diff = np.asarray(W, dtype=float) - anchor.w
    lin = anchor.f_value + float(np.sum(anchor.grad * diff))
    sq = float(np.sum(diff * diff))
    if isinstance(kind, FirstOrderProx):
        return lin + 0.5 * kind.gamma * sq
    if isinstance(kind, SecondOrderProx):
        if anchor.hess is None:
            raise SpecError("second-order surrogate needs anchor.hess")
        d = diff.reshape(-1)
        return lin + 0.5 * kind.gamma * sq + 0.5 * float(d @ anchor.hess @ d)
    if isinstance(kind, Proximal):
        if anchor.f_fn is None:
            raise SpecError("proximal surrogate needs anchor.f_fn")
        return anchor.f_fn(W) + 0.5 * kind.gamma * sq
    if isinstance(kind, LinearBound):
        return lin
    raise SpecError(f"unknown upperbound kind {kind!r}")


# ---------------------------------------------------------------------------
# closed-form block solve for identity-activation networks
# ---------------------------------------------------------------------------

def closed_form_linear_block(net: Network, data: Dataset, j: int,
                             lam: float) -> np.ndarray:
    """Exact minimizer of block j when the whole network is linear.

    With A the product of the downstream weights and B the upstream image of
    X, the block objective (1/N)||Y - A W B||_F^2 + lam ||W||_F^2 is a ridge
    problem; the normal equations in row-major vec(W) have coefficient
    kron(A'A, BB')/N + lam I. Needs lam > 0 or a nonsingular system.
    """
    if not 1 <= j <= net.depth:
        raise SpecError(f"layer index {j} outside 1..{net.depth}")
    if any(a.name != "identity" for a in net.spec.activations):
        raise SpecError("closed-form block solve needs identity activations everywhere")
    if lam < 0:
        raise SpecError(f"lam must be >= 0, got {lam}")

    d_out = net.spec.dims[-1]
    a = np.eye(d_out)
    for w in net.weights[j:][::-1]:
        a = a @ w
    b = data.X
    for w in net.weights[:j - 1]:
        b = w @ b

    n = data.n_samples
    ata = a.T @ a
    bbt = b @ b.T
    coeff = np.kron(ata, bbt) / n + lam * np.eye(ata.shape[0] * bbt.shape[0])
    rhs = (a.T @ data.Y @ b.T).reshape(-1) / n
    try:
        sol = np.linalg.solve(coeff, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularError(
            "normal equations singular; use lam > 0 or full-rank factors") from exc
    return sol.reshape(net.spec.layer_shape(j))
