"""Cyclic block-update training loop.

One outer iteration k touches block j = ((k-1) mod J) + 1: a descent
direction is produced by the configured surrogate family, then the block
moves to the convex combination (1-alpha) W_j + alpha D_j. Stepsizes come
from a diminishing schedule, an Armijo search, or are pinned to 1
(unit-stepsize / exact block-minimization modes). Stopping is checked at the
end of every full cycle on the full-batch stationarity residual.

Each run owns its mutable state (schedule positions, batch stream); networks
and trace rows it hands out are fresh values, safe to keep or share.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CurvatureError, NonSmoothError, SpecError
from .functions import classify_convexity
from .gradients import (BatchSampler, BatchStream, all_block_gradients,
                        block_hessian, block_objective_fn, delta_recursion,
                        objective_value)
from .netcore import Dataset, Network, Unconstrained, forward
from .upperbounds import (FirstOrderProx, InnerSolverConfig, LinearBound,
                          Proximal, SecondOrderProx,
                          closed_form_linear_block,
                          descent_direction_first_order,
                          descent_direction_linear,
                          descent_direction_proximal,
                          descent_direction_second_order,
                          first_order_direction_backtracked, prox_l1_step)

__all__ = [
    "InverseRoot", "Geometric", "Recursive", "Constant", "ArmijoRule",
    "ScheduleReport", "stepsize_next", "validate_schedule",
    "TrainConfig", "TraceRow", "TrainTrace", "normalized_mse",
    "armijo_stepsize", "train_step", "train", "stochastic_train",
]

# stepsizes are clipped into [0, 1) as the convex-combination update requires
_ALPHA_CAP = 1.0 - 1e-9


# ---------------------------------------------------------------------------
# stepsize schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InverseRoot:
    """alpha_k = c / sqrt(k)."""

    c: float = 1.0
    name = "inverse_root"
    satisfies_eq7 = True

    def __post_init__(self):
        if not self.c > 0:
            raise SpecError("inverse-root schedule needs c > 0")


@dataclass(frozen=True)
class Geometric:
    """alpha_k = c / 2^k: summable, so too fast to guarantee stationarity."""

    c: float = 1.0
    name = "geometric"
    satisfies_eq7 = False

    def __post_init__(self):
        if not self.c > 0:
            raise SpecError("geometric schedule needs c > 0")


@dataclass(frozen=True)
class Recursive:
    """alpha_{k+1} = alpha_k (1 - t alpha_k), behaving like 1/(t k) asymptotically."""

    alpha0: float = 1.0
    t: float = 0.99
    name = "recursive"
    satisfies_eq7 = True

    def __post_init__(self):
        if not 0 < self.alpha0 <= 1:
            raise SpecError("recursive schedule needs alpha0 in (0, 1]")
        if not 0 < self.t < 1:
            raise SpecError("recursive schedule needs t in (0, 1)")


@dataclass(frozen=True)
class Constant:
    c: float = 0.1
    name = "constant"
    satisfies_eq7 = False

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise SpecError("constant stepsize must lie in (0, 1)")


@dataclass(frozen=True)
class ArmijoRule:
    """Backtracking line search along the segment toward the direction."""

    shrink: float = 0.5
    slope: float = 1e-4
    alpha_init: float = 1.0
    name = "armijo"
    satisfies_eq7 = False

    def __post_init__(self):
        if not (0 < self.shrink < 1 and 0 < self.slope < 1 and self.alpha_init > 0):
            raise SpecError("armijo parameters out of range")


def stepsize_next(schedule, k: int, state: dict | None = None) -> float:
    """Stepsize for iteration k, clipped into [0, 1); the recursive kind
    mutates its state dict (current alpha) on every call."""
    if k < 1:
        raise SpecError("iteration index starts at 1")
    if isinstance(schedule, InverseRoot):
        alpha = schedule.c / math.sqrt(k)
    elif isinstance(schedule, Geometric):
        alpha = schedule.c * 0.5 ** k
    elif isinstance(schedule, Constant):
        alpha = schedule.c
    elif isinstance(schedule, Recursive):
        if state is None:
            raise SpecError("recursive schedule needs a mutable state dict")
        cur = state.setdefault("alpha", schedule.alpha0)
        alpha = cur * (1.0 - schedule.t * cur)
        state["alpha"] = alpha
    elif isinstance(schedule, ArmijoRule):
        raise SpecError("armijo stepsize depends on the objective; the trainer resolves it")
    else:
        raise SpecError(f"unknown schedule {schedule!r}")
    return min(max(alpha, 0.0), _ALPHA_CAP)


@dataclass(frozen=True)
class ScheduleReport:
    satisfies_eq7: bool
    witness: str


def validate_schedule(schedule) -> ScheduleReport:
    """Classify a schedule against the diminishing-stepsize conditions
    (alpha in [0,1), alpha -> 0, divergent sum, summable squares), with a
    one-line justification string."""
    if isinstance(schedule, InverseRoot):
        return ScheduleReport(True, (
            "c/sqrt(k): diminishing with divergent sum (~2c sqrt(K)); squares decay "
            "like c^2/k (borderline harmonic tail, accepted for this family)"))
    if isinstance(schedule, Recursive):
        return ScheduleReport(True, (
            "alpha(1 - t alpha) behaves like 1/(t k): diminishing, divergent sum, "
            "summable squares (~1/(t^2 k^2))"))
    if isinstance(schedule, Geometric):
        return ScheduleReport(False, (
            "c/2^k sums to c: the divergent-sum condition fails, iterates can stall"))
    if isinstance(schedule, Constant):
        return ScheduleReport(False, "constant alpha never diminishes")
    if isinstance(schedule, ArmijoRule):
        return ScheduleReport(False, (
            "line-search stepsizes are adaptive, not a predetermined diminishing sequence"))
    raise SpecError(f"unknown schedule {schedule!r}")


# ---------------------------------------------------------------------------
# configuration and trace types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Everything the training loop needs beyond (net, data, loss).

    ``upperbound`` and ``schedule`` may each be a single object shared by all
    layers or a per-layer tuple. ``record_every`` defaults to one trace row
    per full cycle (J iterations). ``unit_stepsize`` pins alpha = 1 (gradient
    descent / Newton special cases); ``exact_bcd`` replaces each block by its
    exact (or high-accuracy) minimizer. Both exclude a schedule.
    ``adapt_gamma`` doubles gamma until the first-order surrogate majorizes
    at the candidate direction (full-batch mode only; mini-batch runs keep
    the configured gamma fixed).
    """

    upperbound: object = field(default_factory=FirstOrderProx)
    schedule: object = None
    sampler: BatchSampler = field(default_factory=BatchSampler)
    max_outer_iterations: int = 1000
    grad_norm_tol: float = 1e-8
    record_every: int | None = None
    unit_stepsize: bool = False
    exact_bcd: bool = False
    adapt_gamma: bool = True
    curvature_override: bool = False
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise SpecError("max_outer_iterations must be >= 1")
        if not self.grad_norm_tol > 0:
            raise SpecError("grad_norm_tol must be positive")
        if self.record_every is not None and self.record_every < 1:
            raise SpecError("record_every must be >= 1")
        fixed_alpha = self.unit_stepsize or self.exact_bcd
        if fixed_alpha and self.schedule is not None:
            raise SpecError("unit_stepsize/exact_bcd and a schedule are mutually exclusive")
        if not fixed_alpha and self.schedule is None:
            raise SpecError("a stepsize schedule is required unless alpha is pinned to 1")


@dataclass(frozen=True)
class TraceRow:
    """Snapshot taken after completing outer iteration k.

    ``f``, ``normalized_mse`` and ``full_grad_norm`` describe the updated
    network on the full dataset; ``block_grad_norm`` is the norm of the
    gradient the direction was built from (mini-batch in stochastic mode).
    """

    k: int
    block: int
    f: float
    normalized_mse: float
    block_grad_norm: float
    full_grad_norm: float
    alpha: float
    gamma: float
    wall_seconds: float


@dataclass
class TrainTrace:
    """Recorded rows plus run-level outcomes.

    ``initial_f`` / ``initial_grad_norm`` describe the network before any
    update; the final fields describe it when the loop stopped.
    """

    rows: list = field(default_factory=list)
    initial_f: float = math.nan
    initial_grad_norm: float = math.nan
    final_f: float = math.nan
    final_grad_norm: float = math.nan
    iterations_run: int = 0
    converged: bool = False
    aborted: bool = False
    abort_reason: str = ""

    def f_values(self):
        return [r.f for r in self.rows]


def normalized_mse(H: np.ndarray, Y: np.ndarray) -> float:
    """Training MSE divided by the target variance energy ||Y - Ybar||_F^2."""
    resid = float(np.sum((Y - H) ** 2))
    ybar = Y.mean(axis=1, keepdims=True)
    denom = float(np.sum((Y - ybar) ** 2))
    return resid / denom if denom > 0 else resid


# ---------------------------------------------------------------------------
# line search
# ---------------------------------------------------------------------------

def armijo_stepsize(f_block, W: np.ndarray, D: np.ndarray, grad: np.ndarray,
                    rule: ArmijoRule, max_shrinks: int = 60):
    """Largest alpha_init * shrink^m satisfying the sufficient-decrease test.

    Returns (alpha, accepted). A non-descent direction, or exhausting the
    shrink budget, yields (0.0, False).
    """
    slope = float(np.sum(grad * (D - W)))
    if slope >= 0:
        return 0.0, False
    f0 = f_block(W)
    alpha = rule.alpha_init
    for _ in range(max_shrinks + 1):
        if f_block(W + alpha * (D - W)) <= f0 + rule.slope * alpha * slope:
            return alpha, True
        alpha *= rule.shrink
    return 0.0, False


# ---------------------------------------------------------------------------
# loop internals
# ---------------------------------------------------------------------------

def _per_layer(value, j: int, depth: int):
    if isinstance(value, (list, tuple)):
        if len(value) != depth:
            raise SpecError(f"per-layer setting has length {len(value)}, expected {depth}")
        return value[j - 1]
    return value


class _LoopState:
    """Mutable machinery owned by one training run: schedule states and the
    mini-batch index stream. A shared schedule advances one shared state; a
    per-layer tuple advances each layer's own state."""

    def __init__(self, cfg: TrainConfig, depth: int, n_samples: int):
        self.per_layer = [{} for _ in range(depth)]
        self.shared: dict = {}
        self.stream = BatchStream(cfg.sampler, n_samples)

    def sched_state(self, cfg: TrainConfig, j: int) -> dict:
        if isinstance(cfg.schedule, (list, tuple)):
            return self.per_layer[j - 1]
        return self.shared


def _block_residual_norm(net: Network, grads: list) -> float:
    """Norm of the stacked stationarity residuals: plain gradients on smooth
    layers, prox-gradient residuals (with unit curvature) on L1 layers."""
    total = 0.0
    for j in range(1, net.depth + 1):
        reg = net.spec.regularizers[j - 1]
        g = grads[j - 1]
        if reg.smooth:
            total += float(np.sum(g * g))
        else:
            w = net.weights[j - 1]
            r = w - prox_l1_step(w, g, 1.0, reg.lam)
            total += float(np.sum(r * r))
    return math.sqrt(total)


def _full_diagnostics(net: Network, data: Dataset, loss):
    outs = forward(net, data.X)
    f_val = objective_value(net, data, loss, outs)
    grads = all_block_gradients(net, data, loss, outs)
    return f_val, _block_residual_norm(net, grads), normalized_mse(outs.output, data.Y)


def _require_convex_block(net: Network, loss, j: int, cfg: TrainConfig) -> None:
    curv = classify_convexity(loss, net.spec.activations[j - 1:],
                              net.spec.regularizers[j - 1])
    if not curv.is_strongly_convex and not cfg.curvature_override:
        raise CurvatureError(
            f"block {j} not certified strongly convex; "
            "set curvature_override=True to run the proximal family heuristically")


def _direction(net: Network, step_data: Dataset, loss, cfg: TrainConfig,
               j: int, adapt_ok: bool):
    """Descent direction for block j; returns (D, gamma_used, grad_norm)."""
    kind = _per_layer(cfg.upperbound, j, net.depth)
    feasible = net.spec.feasible_sets[j - 1]
    reg = net.spec.regularizers[j - 1]
    w = net.weights[j - 1]

    outs = forward(net, step_data.X)
    f_anchor = objective_value(net, step_data, loss, outs)
    deltas = delta_recursion(net, outs, loss, step_data.Y)
    grad_data = deltas[j - 1] @ outs.post_activations[j - 1].T
    grad = grad_data + reg.grad(w) if reg.smooth else grad_data
    grad_norm = float(np.linalg.norm(grad))

    if not reg.smooth:
        if cfg.exact_bcd:
            raise NonSmoothError("exact_bcd needs smooth regularizers")
        if not isinstance(kind, FirstOrderProx):
            raise NonSmoothError(
                "L1-regularized blocks are only supported with the first-order family")
        d = prox_l1_step(w, grad_data, kind.gamma, reg.lam)
        return feasible.project(d), kind.gamma, grad_norm

    if cfg.exact_bcd:
        deep_linear = (all(a.name == "identity" for a in net.spec.activations)
                       and loss.name == "l2" and isinstance(feasible, Unconstrained))
        if deep_linear:
            return closed_form_linear_block(net, step_data, j, reg.lam), 0.0, grad_norm
        _require_convex_block(net, loss, j, cfg)
        value_fn, grad_fn = block_objective_fn(net, step_data, loss, j)
        d, _ = descent_direction_proximal(value_fn, grad_fn, w, 0.0, feasible, cfg.inner)
        return d, 0.0, grad_norm

    if isinstance(kind, FirstOrderProx):
        if cfg.adapt_gamma and adapt_ok:
            value_fn, _ = block_objective_fn(net, step_data, loss, j)
            d, gamma = first_order_direction_backtracked(
                w, grad, kind.gamma, feasible, value_fn, f_anchor)
            return d, gamma, grad_norm
        return descent_direction_first_order(w, grad, kind.gamma, feasible), \
            kind.gamma, grad_norm

    if isinstance(kind, SecondOrderProx):
        hess = block_hessian(net, step_data, loss, j)
        d = descent_direction_second_order(w, grad, hess, kind.gamma)
        return feasible.project(d), kind.gamma, grad_norm

    if isinstance(kind, Proximal):
        _require_convex_block(net, loss, j, cfg)
        value_fn, grad_fn = block_objective_fn(net, step_data, loss, j)
        d, _ = descent_direction_proximal(value_fn, grad_fn, w, kind.gamma,
                                          feasible, kind.inner)
        return d, kind.gamma, grad_norm

    if isinstance(kind, LinearBound):
        curv = classify_convexity(loss, net.spec.activations[j - 1:], reg)
        d = descent_direction_linear(w, grad, curv, override=cfg.curvature_override)
        return feasible.project(d), 0.0, grad_norm

    raise SpecError(f"unknown upperbound kind {kind!r}")


def _alpha_for_step(net: Network, step_data: Dataset, loss, cfg: TrainConfig,
                    j: int, k: int, w, d, state: _LoopState) -> float:
    if cfg.unit_stepsize or cfg.exact_bcd:
        return 1.0
    sched = _per_layer(cfg.schedule, j, net.depth)
    if isinstance(sched, ArmijoRule):
        value_fn, grad_fn = block_objective_fn(net, step_data, loss, j)
        alpha, _ = armijo_stepsize(value_fn, w, d, grad_fn(w), sched)
        return alpha
    return stepsize_next(sched, k, state.sched_state(cfg, j))


def _apply_update(net: Network, j: int, w, d, alpha: float) -> Network:
    # alpha == 1 assigns D directly so the gradient-descent / Newton special
    # cases reproduce their textbook updates bitwise
    if alpha == 1.0:
        return net.with_block(j, d)
    return net.with_block(j, (1.0 - alpha) * w + alpha * d)


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def train_step(net: Network, data: Dataset, loss, cfg: TrainConfig, k: int,
               state: _LoopState | None = None):
    """One outer iteration: update block ((k-1) mod J) + 1, leave the rest.

    Returns (new network, TraceRow). Standalone calls recompute the full
    diagnostics every time; the train() loop amortizes them instead. Pass
    the same ``state`` across calls when stepping manually, or recursive
    schedules and mini-batch streams restart every call.
    """
    if k < 1:
        raise SpecError("iteration index starts at 1")
    if state is None:
        state = _LoopState(cfg, net.depth, data.n_samples)
    t0 = time.perf_counter()
    j = ((k - 1) % net.depth) + 1
    batch = state.stream.next(k)
    step_data = data if cfg.sampler.mode == "full" else data.restrict(batch)
    adapt_ok = cfg.sampler.mode == "full"

    w = net.weights[j - 1]
    d, gamma, grad_norm = _direction(net, step_data, loss, cfg, j, adapt_ok)
    alpha = _alpha_for_step(net, step_data, loss, cfg, j, k, w, d, state)
    new_net = _apply_update(net, j, w, d, alpha)

    f_val, full_norm, nmse = _full_diagnostics(new_net, data, loss)
    row = TraceRow(k, j, f_val, nmse, grad_norm, full_norm, alpha, gamma,
                   time.perf_counter() - t0)
    return new_net, row


def _train_loop(net: Network, data: Dataset, loss, cfg: TrainConfig):
    depth = net.depth
    record_every = cfg.record_every if cfg.record_every is not None else depth
    state = _LoopState(cfg, depth, data.n_samples)
    current = net.copy()
    trace = TrainTrace()
    t0 = time.perf_counter()

    try:
        trace.initial_f, trace.initial_grad_norm, _ = _full_diagnostics(current, data, loss)
    except OverflowError as exc:
        trace.aborted = True
        trace.abort_reason = str(exc)
        return current, trace
    f_val, full_norm = trace.initial_f, trace.initial_grad_norm

    for k in range(1, cfg.max_outer_iterations + 1):
        j = ((k - 1) % depth) + 1
        batch = state.stream.next(k)
        step_data = data if cfg.sampler.mode == "full" else data.restrict(batch)
        adapt_ok = cfg.sampler.mode == "full"
        w = current.weights[j - 1]
        try:
            d, gamma, grad_norm = _direction(current, step_data, loss, cfg, j, adapt_ok)
            alpha = _alpha_for_step(current, step_data, loss, cfg, j, k, w, d, state)
        except OverflowError as exc:
            trace.aborted = True
            trace.abort_reason = str(exc)
            break
        current = _apply_update(current, j, w, d, alpha)
        trace.iterations_run = k

        cycle_end = (k % depth == 0)
        record_due = (k % record_every == 0)
        if cycle_end or record_due or k == cfg.max_outer_iterations:
            try:
                f_val, full_norm, nmse = _full_diagnostics(current, data, loss)
            except OverflowError as exc:
                trace.aborted = True
                trace.abort_reason = str(exc)
                break
            if record_due:
                trace.rows.append(TraceRow(
                    k, j, f_val, nmse, grad_norm, full_norm, alpha, gamma,
                    time.perf_counter() - t0))
            if cycle_end and full_norm <= cfg.grad_norm_tol:
                trace.converged = True
                break

    trace.final_f = f_val
    trace.final_grad_norm = full_norm
    return current, trace


def train(net: Network, data: Dataset, loss, cfg: TrainConfig):
    """Full-batch cyclic training; see stochastic_train for mini-batch runs."""
    if cfg.sampler.mode != "full":
        raise SpecError("train() is the batch path; use stochastic_train for mini-batches")
    return _train_loop(net, data, loss, cfg)


def stochastic_train(net: Network, data: Dataset, loss, cfg: TrainConfig):
    """Mini-batch variant of the first-order update.

    With a full sampler this runs exactly the batch code path, so the trace
    is bitwise identical to train(). In mini-batch mode the direction and
    stepsize are computed on the batch; the recorded f / residual-norm
    diagnostics always use the full dataset.
    """
    if cfg.sampler.mode != "full":
        kinds = cfg.upperbound if isinstance(cfg.upperbound, (list, tuple)) \
            else [cfg.upperbound]
        if not all(isinstance(kd, FirstOrderProx) for kd in kinds):
            raise SpecError("the stochastic variant is defined for the first-order family")
        if cfg.exact_bcd:
            raise SpecError("exact_bcd needs full batches")
    return _train_loop(net, data, loss, cfg)
