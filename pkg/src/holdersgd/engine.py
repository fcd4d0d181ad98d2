"""The SGD recursion w_{t+1} = w_t - eta_t grad f(w_t, z_{i_t}) and multi-seed aggregation."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import (
    AggregateTrace,
    Checkpoint,
    DimensionMismatchError,
    Objective,
    Trace,
    index_stream,
    resolve_checkpoints,
    zero_param,
)
from .schedules import Schedule


class AggregateFailureError(RuntimeError):
    """Every seed of a multi-seed run diverged."""


@dataclass(frozen=True)
class RunConfig:
    T: int
    seed: int = 0
    checkpoint_policy: str | tuple[int, ...] = "geometric2"
    divergence_factor: float = 1e6
    extra_checkpoints: tuple[int, ...] = field(default=())
    diagnostics: bool = False
    record_iterates: bool = False

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be an integer >= 1, got {self.T!r}")
        if not self.divergence_factor > 1:
            raise ValueError("divergence_factor must exceed 1")
        if not isinstance(self.checkpoint_policy, str):
            object.__setattr__(self, "checkpoint_policy", tuple(int(t) for t in self.checkpoint_policy))
        object.__setattr__(self, "extra_checkpoints", tuple(int(t) for t in self.extra_checkpoints))

    def checkpoints(self) -> list[int]:
        return resolve_checkpoints(self.T, self.checkpoint_policy, self.extra_checkpoints)


def sgd_step(w, g, eta: float) -> np.ndarray:
    """Return w - eta * g as a new array."""
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if w.shape != g.shape:
        raise DimensionMismatchError(f"iterate shape {w.shape} != gradient shape {g.shape}")
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    return w - eta * g


def run(obj: Objective, sched: Schedule, cfg: RunConfig) -> Trace:
    """Run T SGD steps from w_1 = 0 and record the exact E(w_t), ||grad E(w_t)||^2 at checkpoints.

    The run halts with ``diverged=True`` when a checkpoint risk exceeds
    ``divergence_factor * max(E(w_1), 1)`` or the iterate stops being finite.
    ``final_iterate`` is w_{T+1} (or the last iterate reached before halting).
    """
    X, y = obj.dataset.X, obj.dataset.y
    T = int(cfg.T)
    indices = index_stream(cfg.seed, obj.n, T).tolist()
    etas = sched.etas(T)
    if not np.all(etas > 0):
        raise ValueError("schedule produced a nonpositive step size")
    etas = etas.tolist()
    record_at = set(cfg.checkpoints())
    dpsi = obj.loss.dpsi_scalar

    w = zero_param(obj.d)
    E1 = obj.value(w)
    limit = cfg.divergence_factor * max(E1, 1.0)
    checkpoints: list[Checkpoint] = []
    diverged = False
    iterates = {} if cfg.record_iterates else None
    diag = {k: [] for k in ("risk", "risk_next", "eta", "inner", "g_norm_sq")} if cfg.diagnostics else None

    for t in range(1, T + 1):
        eta = etas[t - 1]
        if t in record_at or diag is not None:
            E, G = obj.value_and_grad(w)
            gsq = float(G @ G)
            if t in record_at:
                checkpoints.append(Checkpoint(t, E, gsq, eta))
                if iterates is not None:
                    iterates[t] = w
            if not (math.isfinite(E) and math.isfinite(gsq)) or E > limit:
                diverged = True
                break
        i = indices[t - 1]
        x = X[i]
        u = float(x @ w) - y[i]
        if not math.isfinite(u):
            diverged = True
            if t not in record_at:
                E, G = obj.value_and_grad(w)
                checkpoints.append(Checkpoint(t, E, float(G @ G), eta))
            break
        coef = eta * dpsi(u)
        w_next = w - coef * x
        if diag is not None:
            g = x * dpsi(u)
            diag["risk"].append(E)
            diag["risk_next"].append(obj.value(w_next))
            diag["eta"].append(eta)
            diag["inner"].append(float(g @ G))
            diag["g_norm_sq"].append(float(g @ g))
        w = w_next

    diagnostics = None if diag is None else {k: np.array(v) for k, v in diag.items()}
    return Trace(int(cfg.seed), tuple(checkpoints), diverged, w, diagnostics, iterates)


def _run_one(args):
    obj, sched, cfg = args
    return run(obj, sched, cfg)


def run_seeds(obj: Objective, sched: Schedule, cfg_base: RunConfig, seeds: Sequence[int],
              processes: int | None = None) -> list[Trace]:
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"seeds must be distinct, got {seeds}")
    jobs = [(obj, sched, replace(cfg_base, seed=s)) for s in seeds]
    if processes and processes > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=processes) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def aggregate(traces: Sequence[Trace], sched: Schedule | None = None,
              optimum_value: float | None = None) -> AggregateTrace:
    """Seed means of risk and squared gradient norm, with the running minimum of the latter.

    Diverged seeds are excluded from the means and listed in ``diverged_seeds``.
    """
    ok = [tr for tr in traces if not tr.diverged]
    bad = tuple(tr.seed for tr in traces if tr.diverged)
    if not ok:
        raise AggregateFailureError(f"all {len(traces)} seeds diverged")
    t = ok[0].t
    for tr in ok[1:]:
        if not np.array_equal(tr.t, t):
            raise ValueError("traces have different checkpoint times")
    mean_risk = np.mean([tr.risk for tr in ok], axis=0)
    mean_g = np.mean([tr.grad_norm_sq for tr in ok], axis=0)
    eta = eta_sum = None
    if sched is not None:
        all_eta = sched.etas(int(t[-1]))
        eta = all_eta[t - 1]
        eta_sum = np.cumsum(all_eta)[t - 1]
    return AggregateTrace(t, mean_risk, mean_g, np.minimum.accumulate(mean_g), len(ok), bad,
                          eta=eta, eta_sum=eta_sum, optimum_value=optimum_value)


def run_multi(obj: Objective, sched: Schedule, cfg_base: RunConfig, seeds: Sequence[int],
              processes: int | None = None, return_traces: bool = False):
    """Run one trace per seed and aggregate them.

    Returns the :class:`AggregateTrace`, or ``(aggregate, traces)`` when
    ``return_traces`` is set.
    """
    traces = run_seeds(obj, sched, cfg_base, seeds, processes)
    opt = obj.pl.optimum_value if obj.pl is not None else None
    agg = aggregate(traces, sched, opt)
    return (agg, traces) if return_traces else agg
