"""Acceptance experiments.

Each ``criterion_k`` function runs one experiment at its stated tolerance and
returns a :class:`CriterionResult`.  The long Welsch and PL runs are cached so
the almost-sure proxy and determinism checks reuse them.
"""
from __future__ import annotations

import functools
import math
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    as_convergence_check,
    bound_ratio_check,
    check_holder,
    check_self_bounding,
    check_smooth_a,
    fit_log_linear,
    fit_rate,
    gradient_check,
)
from .config import load_config
from .core import geometric_checkpoints
from .engine import run
from .experiments import (
    kernel_equivalence,
    numeric_optimum,
    property_objectives,
    run_experiment,
)
from .schedules import ScheduleWarning, poly_schedule, summability_report

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number} ({self.name}): {info} [{self.seconds:.1f}s]"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(number, name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            passed, details = fn(*args, **kwargs)
            return CriterionResult(number, name, bool(passed), details, time.perf_counter() - t0)
        return wrapper
    return deco


def config_path(name: str) -> Path:
    return CONFIG_DIR / name


@functools.lru_cache(maxsize=None)
def welsch_run():
    return run_experiment(load_config(config_path("welsch_poly.toml")))


@functools.lru_cache(maxsize=None)
def pl_run():
    return run_experiment(load_config(config_path("ls_pl.toml")))


@functools.lru_cache(maxsize=None)
def interp_run(name: str = "interp_const.toml"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleWarning)
        return run_experiment(load_config(config_path(name)))


@_timed(1, "smoothness inequality suite")
def criterion_1(n_probes: int = 10_000, tol: float = 1e-8):
    worst = {}
    total = 0
    for name, obj in property_objectives().items():
        for check in (check_holder, check_smooth_a, check_self_bounding):
            rep = check(obj, n_probes, tol=tol)
            total += rep.n_violations
            worst[f"{name}.{rep.check_name}"] = rep.worst_ratio
    key = max(worst, key=worst.get)
    return total == 0, {"violations": total, "checks": len(worst), "worst": f"{key}:{worst[key]:.9f}"}


@_timed(2, "gradient oracle vs finite differences")
def criterion_2(n_points: int = 100, h_rel: float = 1e-5, limit: float = 1e-5):
    errs = {name: float(gradient_check(obj, n_points, h_rel=h_rel).max())
            for name, obj in property_objectives().items()}
    worst = max(errs.values())
    return worst <= limit, {"max_rel_err": worst, "limit": limit}


@_timed(3, "welsch polynomial-schedule bound form")
def criterion_3():
    res = welsch_run()
    agg = res.aggregate
    if agg is None:
        return False, {"error": "all seeds diverged"}
    # the max/median spread is read on the geometric cadence; the dense tail checkpoints
    # (kept for the tail-oscillation check) would otherwise dominate the median
    geo = agg.subset(geometric_checkpoints(int(agg.t[-1])))
    br = bound_ratio_check(geo, res.schedule, (1000, 100_000))
    t = agg.t
    mp_ref = float(agg.min_prefix[t == 1000][0])
    mp_T = float(agg.min_prefix[t == 100_000][0])
    ratio = mp_T / mp_ref
    ok = br.spread <= 10.0 and ratio <= 0.1 and agg.n_seeds == 20
    return ok, {"spread": br.spread, "points": len(br.t), "decay": ratio, "n_seeds": agg.n_seeds}


@_timed(4, "PL-matched schedule O(1/t) rate")
def criterion_4():
    res = pl_run()
    agg = res.aggregate
    if agg is None:
        return False, {"error": "all seeds diverged"}
    t0 = res.meta["schedule"]["t0"]
    window = (max(1000.0, t0), 100_000.0)
    geo = agg.subset(geometric_checkpoints(int(agg.t[-1])))
    fit = fit_rate(window=window, t=geo.t, values=geo.mean_suboptimality)
    ok = -1.3 <= fit.slope <= -0.8 and agg.n_seeds == 20
    return ok, {"slope": fit.slope, "r2": fit.r_squared, "t0": t0, "points": fit.n_points, "n_seeds": agg.n_seeds}


def contraction_test(res) -> tuple[bool, dict]:
    """Log-linear decay at (at least 3/4 of) rate ln(1 - mu eta) and bounded per-step ratios."""
    obj, agg = res.objective, res.aggregate
    eta = float(res.schedule.params["eta"])
    q = 1.0 - obj.pl.mu * eta
    if agg is None or agg.n_seeds == 0:
        return False, {"diverged_seeds": len(res.meta["diverged_seeds"])}
    sub = agg.mean_suboptimality
    if len(agg.t) < 4 or not np.all(sub > 0) or not np.all(np.isfinite(sub)):
        return False, {"diverged_seeds": len(res.meta["diverged_seeds"])}
    fit = fit_log_linear(agg.t, sub)
    limit = math.log(q) + abs(math.log(q)) * 0.25
    ratios = sub[1:] / sub[:-1]
    ok = fit.slope <= limit and float(np.max(ratios)) <= q + 0.05
    return ok, {"slope": fit.slope, "slope_limit": limit, "max_ratio": float(np.max(ratios)),
                "ratio_limit": q + 0.05}


@_timed(5, "zero-variance linear convergence")
def criterion_5():
    res = interp_run()
    ok, details = contraction_test(res)
    ok = ok and res.schedule.theorem_valid and res.aggregate.n_seeds == 10
    return ok, {**details, "n_seeds": res.aggregate.n_seeds if res.aggregate else 0}


@_timed(6, "almost-sure behaviour proxy")
def criterion_6():
    out = {}
    ok = True
    for label, res, with_grad in (("welsch", welsch_run(), False), ("pl", pl_run(), True)):
        agg = res.aggregate
        opt = numeric_optimum(res.objective, res.traces) if res.objective.pl is None else res.objective.pl.optimum_value
        final_sub = float(agg.mean_risk[-1] - opt)
        eps = 10.0 * final_sub
        grad_eps = 10.0 * float(agg.min_prefix[-1]) if with_grad else None
        rep = as_convergence_check(res.traces, 0.9, eps, grad_eps)
        ok = ok and rep.n_pass >= 19
        out[f"{label}_pass"] = f"{rep.n_pass}/{rep.n_pass + rep.n_fail}"
        out[f"{label}_eps"] = eps
    return ok, out


@_timed(7, "linear-kernel oracle equivalence")
def criterion_7(T: int = 1000):
    obj = property_objectives()["least_squares"]
    sched = poly_schedule(1.0 / obj.smoothness.L, 0.75, 1.0)
    pred_gap, grad_gap, cps = kernel_equivalence(obj, sched, T, seed=0)
    return pred_gap <= 1e-10 and grad_gap <= 1e-10, {"pred_gap": pred_gap, "grad_rel_gap": grad_gap,
                                                    "checkpoints": len(cps)}


@_timed(8, "schedule validity guard and summability flags")
def criterion_8():
    res = interp_run("interp_const_invalid.toml")
    flagged = not res.schedule.theorem_valid
    n_div = len(res.meta["diverged_seeds"])
    all_div = res.aggregate is None
    guard = all_div or not contraction_test(res)[0]
    mismatches = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleWarning)
        for theta in np.linspace(0.05, 0.95, 10):
            for alpha in np.linspace(0.1, 1.0, 10):
                s = poly_schedule(1.0, float(theta), float(alpha))
                f = summability_report(s, float(alpha), 1000).flags
                mismatches += f.sum_eta_divergent != (theta <= 1.0)
                mismatches += f.sum_eta_power_convergent != (theta * (1.0 + alpha) > 1.0)
                mismatches += s.theorem_valid != (theta > 1.0 / (1.0 + alpha))
    ok = flagged and guard and mismatches == 0
    return ok, {"flagged_invalid": flagged, "diverged_seeds": n_div, "grid_points": 100, "flag_mismatches": mismatches}


@_timed(9, "determinism of trace CSVs")
def criterion_9():
    from .cli import main

    same = True
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / "a", Path(tmp) / "b"]
        for d in dirs:
            main(["run", "--config", str(config_path("interp_const.toml")), "--out", str(d)])
        names = sorted(p.name for p in dirs[0].glob("trace_seed*.csv"))
        same = bool(names) and all((dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names)
    # the long runs: re-run two seeds from scratch and compare with the cached traces
    for res, name in ((welsch_run(), "welsch_poly.toml"), (pl_run(), "ls_pl.toml")):
        cfg = load_config(config_path(name))
        for tr in res.traces[:2]:
            again = run(res.objective, res.schedule, cfg.run_config(tr.seed))
            same = same and again.to_csv() == tr.to_csv()
    return same, {"interp_traces": len(names), "long_run_seeds_rechecked": 4}


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9)


def run_all(verbose: bool = True) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        r = fn()
        if verbose:
            print(r.line(), flush=True)
        results.append(r)
    return results
