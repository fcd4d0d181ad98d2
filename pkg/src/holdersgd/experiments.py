"""Running configured experiments, plus the fixed setups used by the acceptance suite."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import refine_optimum
from .config import ExperimentConfig, build_objective, build_schedule
from .core import GENERATOR_NAME, AggregateTrace, Objective, Trace
from .engine import RunConfig, aggregate, run, run_seeds
from .kernel import Kernel, kernel_smoothness, run_kernel
from .objectives import (
    make_holder_p,
    make_least_squares,
    make_welsch,
    synthetic_dataset,
)
from .schedules import Schedule, pl_schedule

# Fixed dataset for the smoothness inequality checks and the Welsch rate run.
PROPERTY_DATA = {"n": 100, "d": 10, "seed": 0, "noise": 0.5, "design": "sphere"}
# Well-conditioned least-squares data for the PL-matched schedule (mu/L large enough
# that eta_1 = 1/mu does not blow the iterate up before t0).
PL_DATA = {"n": 100, "d": 5, "seed": 0, "noise": 0.5, "design": "sphere"}
HOLDER_EXPONENTS = (0.3, 0.5, 0.7)


def property_objectives() -> dict[str, Objective]:
    data = synthetic_dataset(**PROPERTY_DATA)
    objs = {"least_squares": make_least_squares(data), "welsch": make_welsch(data, 1.0)}
    for a in HOLDER_EXPONENTS:
        objs[f"holder_p_{a}"] = make_holder_p(data, a)
    return objs


def pl_objective() -> Objective:
    return make_least_squares(synthetic_dataset(**PL_DATA))


@dataclass
class ExperimentResult:
    objective: Objective
    schedule: Schedule
    traces: list[Trace]
    aggregate: AggregateTrace | None
    meta: dict = field(default_factory=dict)


def _schedule_meta(sched: Schedule, obj_smoothness, pl) -> dict:
    flags = sched.flags()
    out = {
        "spec": sched.to_dict(),
        "theorem_valid": sched.theorem_valid,
        "reason": sched.reason,
        "sum_eta_divergent": flags.sum_eta_divergent,
        "sum_eta_power_convergent": flags.sum_eta_power_convergent,
    }
    if sched.kind == "pl_matched":
        out["t0"] = pl_schedule(sched.params["mu"], obj_smoothness)[1].t0
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every seed of ``cfg`` (parametric or kernel) and aggregate the non-diverged ones."""
    obj = build_objective(cfg)
    base = cfg.run_config()
    kernel = None
    if cfg.kernel is not None:
        kernel = Kernel.for_data(cfg.kernel["kind"], obj.dataset.X, cfg.kernel.get("sigma"))
        smooth = kernel_smoothness(obj.loss, kernel, obj.dataset)
        sched = build_schedule(cfg, smooth, obj.pl if kernel.kind == "linear" else None)
        traces = [run_kernel(obj.dataset, kernel, obj.loss, sched, replace(base, seed=s)).trace for s in cfg.seeds]
    else:
        smooth = obj.smoothness
        sched = build_schedule(cfg, smooth, obj.pl)
        traces = run_seeds(obj, sched, base, cfg.seeds, cfg.processes)
    opt = obj.pl.optimum_value if obj.pl is not None and kernel is None else None
    agg = None
    if any(not tr.diverged for tr in traces):
        agg = aggregate(traces, sched, opt)
    meta = {
        "config": cfg.to_dict(),
        "objective": obj.describe(),
        "schedule": _schedule_meta(sched, smooth, obj.pl),
        "kernel": None if kernel is None else {**kernel.to_dict(), "smoothness": smooth.to_dict()},
        "generator": {"name": GENERATOR_NAME, "index_map": "floor(r * n / 2**64)",
                      "seeding": "key (seed, 0), block k uses counter (k, 0, 0, 0), k = 1, 2, ..."},
        "checkpoints": list(base.checkpoints()),
        "diverged_seeds": [tr.seed for tr in traces if tr.diverged],
        "package_version": __version__,
    }
    return ExperimentResult(obj, sched, traces, agg, meta)


def write_result(res: ExperimentResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for tr in res.traces:
        tr.write_csv(out / f"trace_seed{tr.seed}.csv")
    if res.aggregate is not None:
        res.aggregate.write_json(out / "aggregate.json")
    (out / "meta.json").write_text(json.dumps(res.meta, indent=2) + "\n", encoding="utf-8")


def numeric_optimum(obj: Objective, traces: list[Trace]) -> float:
    """Best of the certified optimum (if any) and local searches from the final iterates."""
    starts = [tr.final_iterate for tr in traces if not tr.diverged and tr.final_iterate.shape == (obj.d,)]
    starts.append(np.zeros(obj.d))
    value, _ = refine_optimum(obj, starts)
    if obj.pl is not None:
        value = min(value, obj.pl.optimum_value)
    return value


def mean_per_step_ratios(sub: np.ndarray) -> np.ndarray:
    """sub(t+1) / sub(t) for consecutive checkpoints."""
    return sub[1:] / sub[:-1]


def kernel_equivalence(obj: Objective, sched: Schedule, T: int = 1000, seed: int = 0, policy="all"):
    """Run linear-kernel functional SGD and parametric SGD on the same index stream.

    Returns (max abs prediction gap, max relative gradient-norm gap, checkpoints).
    """
    cfg = RunConfig(T, seed, policy, record_iterates=True)
    par = run(obj, sched, cfg)
    ker = run_kernel(obj.dataset, Kernel("linear"), obj.loss, sched, cfg, record_predictions=True)
    pred_gap = 0.0
    grad_gap = 0.0
    for cp_p, cp_k in zip(par.checkpoints, ker.trace.checkpoints):
        assert cp_p.t == cp_k.t
        preds = obj.dataset.X @ par.iterates[cp_p.t]
        pred_gap = max(pred_gap, float(np.max(np.abs(preds - ker.predictions[cp_k.t]))))
        denom = max(cp_p.grad_norm_sq, 1e-300)
        grad_gap = max(grad_gap, abs(cp_k.grad_norm_sq - cp_p.grad_norm_sq) / denom)
    return pred_gap, grad_gap, [c.t for c in par.checkpoints]


def tail_window_start(T: int, fraction: float) -> int:
    return max(1, math.ceil(fraction * T))
