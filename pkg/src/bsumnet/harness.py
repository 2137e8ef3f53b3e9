"""Experiment harness: dataset ingestion, baselines, and reproducible runs.

An experiment is a JSON config naming a dataset (CSV file or seeded synthetic
generator), a network, a loss, one or more proposed-method variants, and
optional baseline optimizers. Every (method, seed) pair trains from the same
seed-determined initial network and produces one curve CSV plus one JSON
summary. Curve files are byte-reproducible: the wall_seconds column is zeroed
on emission (real timings live in the summaries).
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestError, NonSmoothError, SpecError
from .functions import (ACTIVATIONS, LOSSES, Logistic, Regularizer)
from .gradients import BatchSampler, all_block_gradients, objective_value
from .netcore import (Dataset, FrobeniusBall, Network, NetworkSpec, Toeplitz,
                      Unconstrained, build_network, forward)
from .trainer import (ArmijoRule, Constant, Geometric, InverseRoot, Recursive,
                      TraceRow, TrainConfig, TrainTrace, normalized_mse,
                      stochastic_train)
from .upperbounds import (FirstOrderProx, InnerSolverConfig, LinearBound,
                          Proximal, SecondOrderProx)

__all__ = [
    "load_csv_dataset", "synth_regression",
    "baseline_bp_clr", "baseline_adagrad",
    "emit_curves", "parse_curves",
    "ExperimentConfig", "BaselineSpec", "MethodSpec", "ExperimentResult",
    "parse_config", "load_config", "run_experiment",
]

CURVE_HEADER = "method,seed,k,f,normalized_mse,grad_norm,alpha,wall_seconds"

_DIVERGENCE_CAP = 1e12


# ---------------------------------------------------------------------------
# dataset ingestion
# ---------------------------------------------------------------------------

def load_csv_dataset(path, target_cols, standardize: bool = False) -> Dataset:
    """Read a numeric CSV (header row required) into feature/target matrices.

    ``target_cols`` selects target columns by header name or 0-based index;
    the remaining columns become features, in file order. Matrices are
    transposed to the (d, N) layout. With ``standardize`` each feature row is
    z-scored using the population standard deviation; constant rows are left
    at zero after centering.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
            vals = []
            for name, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise IngestError(
                        f"{path}: row {i}, column {name!r}: non-numeric cell {cell!r}") from None
            rows.append(vals)
    if not rows:
        raise IngestError(f"{path}: no data rows")

    t_idx = []
    for col in target_cols:
        if isinstance(col, int):
            if not 0 <= col < len(header):
                raise IngestError(f"target column index {col} outside 0..{len(header) - 1}")
            t_idx.append(col)
        else:
            if col not in header:
                raise IngestError(f"target column {col!r} not in header {header}")
            t_idx.append(header.index(col))
    if not t_idx:
        raise IngestError("at least one target column is required")
    if len(set(t_idx)) != len(t_idx):
        raise IngestError(f"duplicate target columns in {target_cols}")
    f_idx = [i for i in range(len(header)) if i not in t_idx]
    if not f_idx:
        raise IngestError("no feature columns left after removing targets")

    table = np.asarray(rows, dtype=float)
    X = table[:, f_idx].T.copy()
    Y = table[:, t_idx].T.copy()
    if standardize:
        mean = X.mean(axis=1, keepdims=True)
        std = X.std(axis=1, keepdims=True)
        X = X - mean
        live = std[:, 0] > 0
        X[live] /= std[live]
    return Dataset(X, Y)


def synth_regression(seed: int, n_samples: int = 252, n_features: int = 13,
                     teacher_dims=None, teacher_activation=None,
                     noise_sigma: float = 0.1, return_teacher: bool = False):
    """Gaussian inputs pushed through a seeded teacher network plus noise.

    Defaults mirror the benchmark scale (N=252, 13 features, one target).
    Deterministic in all arguments.
    """
    if n_samples < 1:
        raise SpecError("need at least one sample")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_features, n_samples))
    dims = list(teacher_dims) if teacher_dims is not None \
        else [n_features, 10, 10, 10, 1]
    if dims[0] != n_features:
        raise SpecError(f"teacher dims start at {dims[0]}, expected {n_features}")
    act = teacher_activation if teacher_activation is not None else Logistic()
    spec = NetworkSpec.homogeneous(dims, act)
    teacher = build_network(spec, "gaussian", seed=int(rng.integers(2 ** 31)))
    Y = forward(teacher, X).output
    if noise_sigma > 0:
        Y = Y + noise_sigma * rng.standard_normal(Y.shape)
    data = Dataset(X, Y)
    return (data, teacher) if return_teacher else data


# ---------------------------------------------------------------------------
# baseline optimizers
# ---------------------------------------------------------------------------

def _check_smooth(net: Network) -> None:
    if any(not r.smooth for r in net.spec.regularizers):
        raise NonSmoothError("baseline optimizers need smooth regularizers everywhere")


def _baseline_row(k, net, data, loss, grads, rate, t0):
    outs = forward(net, data.X)
    f_val = objective_value(net, data, loss, outs)
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    return f_val, TraceRow(k, 0, f_val, normalized_mse(outs.output, data.Y),
                           norm, norm, rate, 0.0, time.perf_counter() - t0)


def baseline_bp_clr(net: Network, data: Dataset, loss, rate: float,
                    max_iterations: int = 1000, record_every: int = 1,
                    grad_norm_tol: float = 0.0) -> TrainTrace:
    """Plain backprop with a constant learning rate.

    All layers step simultaneously from gradients taken at the same iterate
    (one iteration here is a full-cycle equivalent of the block methods).
    Aborts once the objective exceeds the divergence cap. rate = 0 is allowed
    and leaves the weights frozen.
    """
    if rate < 0:
        raise SpecError("learning rate must be nonnegative")
    _check_smooth(net)
    current = net.copy()
    trace = TrainTrace()
    t0 = time.perf_counter()
    grads = all_block_gradients(current, data, loss)
    trace.initial_f = objective_value(current, data, loss)
    trace.initial_grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    f_val, norm = trace.initial_f, trace.initial_grad_norm
    for k in range(1, max_iterations + 1):
        try:
            grads = all_block_gradients(current, data, loss)
            for j in range(current.depth):
                current.weights[j] = current.weights[j] - rate * grads[j]
            f_val, row = _baseline_row(k, current, data, loss, grads, rate, t0)
        except OverflowError as exc:
            trace.aborted = True
            trace.abort_reason = str(exc)
            break
        norm = row.full_grad_norm
        trace.iterations_run = k
        if k % record_every == 0:
            trace.rows.append(row)
        if not math.isfinite(f_val) or f_val > _DIVERGENCE_CAP:
            trace.aborted = True
            trace.abort_reason = f"objective diverged to {f_val:.3g}"
            break
        if grad_norm_tol > 0 and norm <= grad_norm_tol:
            trace.converged = True
            break
    trace.final_f = f_val
    trace.final_grad_norm = norm
    return trace


def baseline_adagrad(net: Network, data: Dataset, loss, rate: float = 0.01,
                     eps: float = 1e-8, max_iterations: int = 1000,
                     record_every: int = 1, grad_norm_tol: float = 0.0) -> TrainTrace:
    """Backprop scaled per entry by accumulated squared gradients.

    Accumulators start at zero and grow monotonically; the update is
    rate * g / sqrt(accum + eps).
    """
    if not (rate > 0 and eps > 0):
        raise SpecError("rate and eps must be positive")
    _check_smooth(net)
    current = net.copy()
    accum = [np.zeros_like(w) for w in current.weights]
    trace = TrainTrace()
    t0 = time.perf_counter()
    grads = all_block_gradients(current, data, loss)
    trace.initial_f = objective_value(current, data, loss)
    trace.initial_grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    f_val, norm = trace.initial_f, trace.initial_grad_norm
    for k in range(1, max_iterations + 1):
        try:
            grads = all_block_gradients(current, data, loss)
            for j in range(current.depth):
                accum[j] += grads[j] * grads[j]
                current.weights[j] = current.weights[j] \
                    - rate * grads[j] / np.sqrt(accum[j] + eps)
            f_val, row = _baseline_row(k, current, data, loss, grads, rate, t0)
        except OverflowError as exc:
            trace.aborted = True
            trace.abort_reason = str(exc)
            break
        norm = row.full_grad_norm
        trace.iterations_run = k
        if k % record_every == 0:
            trace.rows.append(row)
        if not math.isfinite(f_val) or f_val > _DIVERGENCE_CAP:
            trace.aborted = True
            trace.abort_reason = f"objective diverged to {f_val:.3g}"
            break
        if grad_norm_tol > 0 and norm <= grad_norm_tol:
            trace.converged = True
            break
    trace.final_f = f_val
    trace.final_grad_norm = norm
    return trace


# ---------------------------------------------------------------------------
# curve files
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_curves(traces, path) -> Path:
    """Write (method, seed, trace) triples as one CSV, LF newlines, UTF-8.

    Rows are grouped by method, then seed, then iteration. Floats use 17
    significant digits so parse(emit(trace)) round-trips exactly.
    """
    path = Path(path)
    entries = sorted(traces, key=lambda t: (t[0], t[1]))
    lines = [CURVE_HEADER]
    for method, seed, trace in entries:
        for r in sorted(trace.rows, key=lambda r: r.k):
            lines.append(",".join([
                method, str(int(seed)), str(int(r.k)),
                _fmt(r.f), _fmt(r.normalized_mse), _fmt(r.full_grad_norm),
                _fmt(r.alpha), _fmt(r.wall_seconds),
            ]))
    try:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IngestError(f"cannot write curve file {path}: {exc}") from exc
    return path


def parse_curves(path):
    """Inverse of emit_curves: list of (method, seed, k, f, nmse, grad_norm,
    alpha, wall_seconds) tuples."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(header) != CURVE_HEADER:
            raise IngestError(f"{path}: unexpected header {header}")
        for row in reader:
            out.append((row[0], int(row[1]), int(row[2])) + tuple(float(c) for c in row[3:]))
    return out


# ---------------------------------------------------------------------------
# experiment configs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    name: str
    train: TrainConfig


@dataclass(frozen=True)
class BaselineSpec:
    name: str            # "bp_clr" | "adagrad"
    rate: float
    eps: float = 1e-8
    max_iterations: int = 1000
    record_every: int = 1
    grad_norm_tol: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    spec: NetworkSpec
    loss: object
    methods: tuple
    baselines: tuple
    seeds: tuple
    output_dir: str
    init: str = "uniform"
    init_scale: float | None = None

    def __post_init__(self):
        if not self.methods and not self.baselines:
            raise ConfigError("configure at least one method or baseline")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


def _reject_unknown(d: dict, allowed, where: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _as_kind_dict(value, where: str) -> dict:
    if isinstance(value, str):
        return {"kind": value}
    if isinstance(value, dict):
        if "kind" not in value:
            raise ConfigError(f"{where}: missing 'kind'")
        return dict(value)
    raise ConfigError(f"{where}: expected a kind name or object, got {value!r}")


def _parse_activation(value, where: str):
    d = _as_kind_dict(value, where)
    kind = d.pop("kind")
    if kind not in ACTIVATIONS:
        raise ConfigError(f"{where}: unknown activation {kind!r}")
    try:
        return ACTIVATIONS[kind](**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: bad activation params {d}: {exc}") from None


def _parse_loss(value, where: str):
    d = _as_kind_dict(value, where)
    kind = d.pop("kind")
    if kind not in LOSSES:
        raise ConfigError(f"{where}: unknown loss {kind!r}")
    try:
        return LOSSES[kind](**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: bad loss params {d}: {exc}") from None


def _parse_feasible(value, where: str):
    d = _as_kind_dict(value, where)
    kind = d.pop("kind")
    if kind == "unconstrained":
        _reject_unknown(d, (), where)
        return Unconstrained()
    if kind == "toeplitz":
        _reject_unknown(d, (), where)
        return Toeplitz()
    if kind == "frobenius_ball":
        _reject_unknown(d, ("radius",), where)
        if "radius" not in d:
            raise ConfigError(f"{where}: frobenius_ball needs a radius")
        return FrobeniusBall(float(d["radius"]))
    raise ConfigError(f"{where}: unknown feasible set {kind!r}")


def _parse_regularizer(value, where: str):
    d = _as_kind_dict(value, where)
    kind = d.pop("kind")
    _reject_unknown(d, ("lam",), where)
    if kind == "none":
        return Regularizer.none()
    if kind in ("l2", "l1"):
        return Regularizer(kind, float(d.get("lam", 0.0)))
    raise ConfigError(f"{where}: unknown regularizer {kind!r}")


def _parse_upperbound(value, where: str):
    d = _as_kind_dict(value, where)
    kind = d.pop("kind")
    if kind == "first_order_prox":
        _reject_unknown(d, ("gamma",), where)
        return FirstOrderProx(float(d.get("gamma", 1.0)))
    if kind == "second_order_prox":
        _reject_unknown(d, ("gamma",), where)
        return SecondOrderProx(float(d.get("gamma", 1.0)))
    if kind == "proximal":
        _reject_unknown(d, ("gamma", "inner"), where)
        inner = d.get("inner", {})
        _reject_unknown(inner, ("max_iters", "grad_tol", "shrink", "slope", "step_init"),
                        f"{where}.inner")
        return Proximal(float(d.get("gamma", 1.0)), InnerSolverConfig(**inner))
    if kind == "linear":
        _reject_unknown(d, (), where)
        return LinearBound()
    raise ConfigError(f"{where}: unknown upperbound {kind!r}")


def _parse_schedule(value, where: str):
    if value is None:
        return None
    d = _as_kind_dict(value, where)
    kind = d.pop("kind")
    table = {
        "inverse_root": (InverseRoot, ("c",)),
        "geometric": (Geometric, ("c",)),
        "recursive": (Recursive, ("alpha0", "t")),
        "constant": (Constant, ("c",)),
        "armijo": (ArmijoRule, ("shrink", "slope", "alpha_init")),
    }
    if kind not in table:
        raise ConfigError(f"{where}: unknown schedule {kind!r}")
    cls, allowed = table[kind]
    _reject_unknown(d, allowed, where)
    try:
        return cls(**d)
    except SpecError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_sampler(value, where: str) -> BatchSampler:
    if value is None:
        return BatchSampler()
    d = dict(value)
    _reject_unknown(d, ("mode", "batch_size", "seed"), where)
    try:
        return BatchSampler(**d)
    except SpecError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _maybe_list(value, parse, where):
    if isinstance(value, list):
        return tuple(parse(v, f"{where}[{i}]") for i, v in enumerate(value))
    return parse(value, where)


def _parse_network(d: dict) -> tuple:
    _reject_unknown(d, ("dims", "activation", "feasible", "regularizer",
                        "init", "init_scale"), "network")
    if "dims" not in d:
        raise ConfigError("network: dims is required")
    dims = [int(x) for x in d["dims"]]
    depth = len(dims) - 1

    def widen(parsed):
        return parsed if isinstance(parsed, tuple) else (parsed,) * depth

    acts = widen(_maybe_list(d.get("activation", "logistic"),
                             _parse_activation, "network.activation"))
    feas = widen(_maybe_list(d.get("feasible", "unconstrained"),
                             _parse_feasible, "network.feasible"))
    regs = widen(_maybe_list(d.get("regularizer", {"kind": "none"}),
                             _parse_regularizer, "network.regularizer"))
    try:
        spec = NetworkSpec(tuple(dims), acts, feas, regs)
    except SpecError as exc:
        raise ConfigError(f"network: {exc}") from None
    init = d.get("init", "uniform")
    if init not in ("zeros", "uniform", "gaussian"):
        raise ConfigError(f"network.init: unknown scheme {init!r}")
    scale = d.get("init_scale")
    return spec, init, None if scale is None else float(scale)


def _parse_method(d: dict, idx: int) -> MethodSpec:
    allowed = ("name", "upperbound", "schedule", "sampler", "max_iterations",
               "grad_norm_tol", "record_every", "unit_stepsize", "exact_bcd",
               "adapt_gamma", "curvature_override")
    where = f"methods[{idx}]"
    _reject_unknown(d, allowed, where)
    ub = _maybe_list(d.get("upperbound", {"kind": "first_order_prox"}),
                     _parse_upperbound, f"{where}.upperbound")
    sched = d.get("schedule")
    if isinstance(sched, list):
        sched = tuple(_parse_schedule(s, f"{where}.schedule[{i}]")
                      for i, s in enumerate(sched))
    else:
        sched = _parse_schedule(sched, f"{where}.schedule")
    try:
        cfg = TrainConfig(
            upperbound=ub,
            schedule=sched,
            sampler=_parse_sampler(d.get("sampler"), f"{where}.sampler"),
            max_outer_iterations=int(d.get("max_iterations", 1000)),
            grad_norm_tol=float(d.get("grad_norm_tol", 1e-8)),
            record_every=d.get("record_every"),
            unit_stepsize=bool(d.get("unit_stepsize", False)),
            exact_bcd=bool(d.get("exact_bcd", False)),
            adapt_gamma=bool(d.get("adapt_gamma", True)),
            curvature_override=bool(d.get("curvature_override", False)),
        )
    except SpecError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    name = d.get("name", f"prop{idx}")
    return MethodSpec(str(name), cfg)


def _parse_baseline(d: dict, idx: int) -> BaselineSpec:
    where = f"baselines[{idx}]"
    _reject_unknown(d, ("kind", "rate", "eps", "max_iterations",
                        "record_every", "grad_norm_tol"), where)
    kind = d.get("kind")
    if kind not in ("bp_clr", "adagrad"):
        raise ConfigError(f"{where}: unknown baseline {kind!r}")
    return BaselineSpec(
        name=kind,
        rate=float(d.get("rate", 0.01)),
        eps=float(d.get("eps", 1e-8)),
        max_iterations=int(d.get("max_iterations", 1000)),
        record_every=int(d.get("record_every", 1)),
        grad_norm_tol=float(d.get("grad_norm_tol", 0.0)),
    )


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config dict; unknown keys anywhere are rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, ("dataset", "network", "loss", "methods",
                          "baselines", "seeds", "output_dir"), "config")
    for key in ("dataset", "network", "seeds"):
        if key not in raw:
            raise ConfigError(f"config: {key} is required")

    ds = dict(raw["dataset"])
    kind = ds.get("kind")
    if kind == "csv":
        _reject_unknown(ds, ("kind", "path", "target_cols", "standardize"), "dataset")
        if "path" not in ds or "target_cols" not in ds:
            raise ConfigError("dataset: csv needs path and target_cols")
    elif kind == "synthetic":
        _reject_unknown(ds, ("kind", "seed", "n_samples", "n_features",
                             "teacher_dims", "noise_sigma"), "dataset")
    else:
        raise ConfigError(f"dataset: unknown kind {kind!r}")

    spec, init, init_scale = _parse_network(dict(raw["network"]))
    loss = _parse_loss(raw.get("loss", "l2"), "loss")
    methods = tuple(_parse_method(dict(m), i)
                    for i, m in enumerate(raw.get("methods", [])))
    baselines = tuple(_parse_baseline(dict(b), i)
                      for i, b in enumerate(raw.get("baselines", [])))
    names = [m.name for m in methods] + [b.name for b in baselines]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate method/baseline names in {names}")
    seeds = tuple(int(s) for s in raw["seeds"])
    return ExperimentConfig(
        dataset=ds, spec=spec, loss=loss, methods=methods,
        baselines=baselines, seeds=seeds,
        output_dir=str(raw.get("output_dir", "out")),
        init=init, init_scale=init_scale,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    curve_paths: list = field(default_factory=list)
    summary_paths: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _resolve_dataset(cfg: ExperimentConfig) -> Dataset:
    ds = cfg.dataset
    if ds["kind"] == "csv":
        return load_csv_dataset(ds["path"], ds["target_cols"],
                                bool(ds.get("standardize", False)))
    return synth_regression(
        seed=int(ds.get("seed", 0)),
        n_samples=int(ds.get("n_samples", 252)),
        n_features=int(ds.get("n_features", cfg.spec.dims[0])),
        teacher_dims=ds.get("teacher_dims"),
        noise_sigma=float(ds.get("noise_sigma", 0.1)),
    )


def _zero_wall(trace: TrainTrace) -> TrainTrace:
    # byte-identical reruns: timings stay in the JSON summaries only
    out = TrainTrace(
        rows=[TraceRow(r.k, r.block, r.f, r.normalized_mse, r.block_grad_norm,
                       r.full_grad_norm, r.alpha, r.gamma, 0.0)
              for r in trace.rows],
        initial_f=trace.initial_f, initial_grad_norm=trace.initial_grad_norm,
        final_f=trace.final_f, final_grad_norm=trace.final_grad_norm,
        iterations_run=trace.iterations_run, converged=trace.converged,
        aborted=trace.aborted, abort_reason=trace.abort_reason)
    return out


def _run_one(cfg: ExperimentConfig, data: Dataset, name: str, seed: int,
             net0: Network, out_dir: Path):
    t0 = time.perf_counter()
    status = "ok"
    error = ""
    trace = TrainTrace()
    cycle_div = 1
    try:
        method = next((m for m in cfg.methods if m.name == name), None)
        if method is not None:
            _, trace = stochastic_train(net0.copy(), data, cfg.loss, method.train)
            cycle_div = cfg.spec.depth
        else:
            base = next(b for b in cfg.baselines if b.name == name)
            if base.name == "bp_clr":
                trace = baseline_bp_clr(net0.copy(), data, cfg.loss, base.rate,
                                        base.max_iterations, base.record_every,
                                        base.grad_norm_tol)
            else:
                trace = baseline_adagrad(net0.copy(), data, cfg.loss, base.rate,
                                         base.eps, base.max_iterations,
                                         base.record_every, base.grad_norm_tol)
        if trace.aborted:
            status = "failed"
            error = trace.abort_reason
    except Exception as exc:  # noqa: BLE001 - surfaced in the summary
        status = "failed"
        error = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t0

    curve_path = out_dir / f"{name}_seed{seed}.csv"
    emit_curves([(name, seed, _zero_wall(trace))], curve_path)

    def num(x):
        # keep the summaries strict JSON: no NaN/Infinity tokens
        return x if math.isfinite(x) else None

    summary = {
        "method": name,
        "seed": seed,
        "status": status,
        "error": error,
        "final_f": num(trace.final_f),
        "final_grad_norm": num(trace.final_grad_norm),
        "initial_f": num(trace.initial_f),
        "initial_grad_norm": num(trace.initial_grad_norm),
        "iterations": trace.iterations_run,
        "cycle_equivalents": trace.iterations_run // max(cycle_div, 1),
        "converged": trace.converged,
        "wall_time_seconds": wall,
    }
    summary_path = out_dir / f"{name}_seed{seed}.summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return curve_path, summary_path, status, f"{name} seed {seed}: {error}"


def run_experiment(cfg: ExperimentConfig, out_dir=None, seeds=None) -> ExperimentResult:
    """Train every configured (method, seed) pair and write curves/summaries.

    All methods share the seed's initial network, so comparisons start from
    the same point. Runs that abort are recorded as failed but do not stop
    the remaining runs. BSUM_TRAIN_THREADS > 1 runs (method, seed) pairs in
    a thread pool.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    use_seeds = tuple(int(s) for s in (seeds if seeds else cfg.seeds))
    data = _resolve_dataset(cfg)
    names = [m.name for m in cfg.methods] + [b.name for b in cfg.baselines]

    jobs = []
    for seed in use_seeds:
        net0 = build_network(cfg.spec, cfg.init, seed=seed, scale=cfg.init_scale)
        for name in names:
            jobs.append((name, seed, net0))

    raw_threads = os.environ.get("BSUM_TRAIN_THREADS", "1") or "1"
    try:
        threads = int(raw_threads)
    except ValueError:
        raise ConfigError(
            f"BSUM_TRAIN_THREADS must be an integer, got {raw_threads!r}") from None
    result = ExperimentResult()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(
                lambda job: _run_one(cfg, data, job[0], job[1], job[2], out), jobs))
    else:
        outcomes = [_run_one(cfg, data, name, seed, net0, out)
                    for name, seed, net0 in jobs]
    for curve, summary, status, failure in outcomes:
        result.curve_paths.append(curve)
        result.summary_paths.append(summary)
        if status != "ok":
            result.failures.append(failure)
    return result
