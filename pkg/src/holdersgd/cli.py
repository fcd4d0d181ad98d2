"""Command-line entry point: ``holdersgd {run,verify,fit,sweep}``.

Exit codes: 0 success, 1 a check failed (or every seed diverged), 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (
    EstimationUndefinedError,
    InsufficientPointsError,
    bound_ratio_check,
    check_holder,
    check_self_bounding,
    check_smooth_a,
    estimate_pl,
    fit_rate,
    gradient_check,
)
from .config import ConfigError, build_objective, load_config, parse_seed_string, sweep_cells
from .core import AggregateTrace
from .experiments import run_experiment, write_result

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
QUANTITIES = ("min_prefix", "mean_suboptimality", "mean_grad_norm_sq", "mean_risk")


def _err(msg: str) -> None:
    print(f"holdersgd: error: {msg}", file=sys.stderr)


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seeds", None):
        seeds = parse_seed_string(args.seeds)
        if not seeds or len(set(seeds)) != len(seeds):
            raise ConfigError(f"--seeds: need distinct seeds, got {args.seeds!r}")
        cfg = replace(cfg, seeds=seeds)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=str(Path(args.out).resolve()))
    return cfg


def _parse_window(s: str | None):
    if s is None:
        return None
    try:
        lo, hi = (float(v) for v in s.split(","))
    except ValueError:
        raise ConfigError(f"--window: expected 'lo,hi', got {s!r}") from None
    if lo > hi:
        raise ConfigError(f"--window: lo > hi in {s!r}")
    return lo, hi


def cmd_run(args) -> int:
    cfg = _load(args)
    res = run_experiment(cfg)
    out = cfg.resolve(cfg.out)
    write_result(res, out)
    n_div = len(res.meta["diverged_seeds"])
    print(f"wrote {len(res.traces)} traces to {out} ({n_div} diverged)")
    return EXIT_FAIL if res.aggregate is None else EXIT_OK


def verify_objective(obj, tol: dict) -> dict:
    """Run the full checker suite and return a JSON-ready report with an overall ``ok`` flag."""
    kw = {"radius": tol["radius"], "tol": tol["relative"]}
    checks = {
        "holder": check_holder(obj, int(tol["n_probes"]), **kw),
        "smooth_a": check_smooth_a(obj, int(tol["n_probes"]), **kw),
        "self_bounding": check_self_bounding(obj, int(tol["n_probes"]), **kw),
    }
    report = {"objective": obj.describe(), "tolerances": dict(tol),
              "checks": {k: v.to_dict() for k, v in checks.items()}}
    ok = all(v.ok for v in checks.values())
    if obj.pl is None:
        report["pl"] = {"skipped": True, "reason": "objective carries no PL certificate"}
    else:
        try:
            mu_hat = estimate_pl(obj, int(tol["n_pl_probes"]), tol["radius"])
            pl_ok = obj.pl.mu <= mu_hat
            report["pl"] = {"skipped": False, "mu": obj.pl.mu, "mu_hat": mu_hat, "ok": pl_ok}
        except EstimationUndefinedError as exc:
            pl_ok = True
            report["pl"] = {"skipped": True, "reason": str(exc)}
        ok = ok and pl_ok
    errs = gradient_check(obj, int(tol["fd_points"]), tol["radius"], tol["fd_h_rel"])
    fd_ok = bool(np.max(errs) <= tol["fd_rel_err"])
    report["finite_difference"] = {"n_points": int(errs.size), "max_rel_err": float(np.max(errs)),
                                   "median_rel_err": float(np.median(errs)), "ok": fd_ok}
    report["ok"] = bool(ok and fd_ok)
    return report


def cmd_verify(args) -> int:
    cfg = _load(args)
    report = verify_objective(build_objective(cfg), cfg.tolerances)
    out = cfg.resolve(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for name, c in report["checks"].items():
        status = "ok" if c["n_violations"] == 0 else "VIOLATED"
        print(f"{name}: {c['n_violations']}/{c['n_probes']} violations, worst ratio {c['worst_ratio']:.6g} [{status}]")
        if c["n_violations"]:
            print(f"  worst probe: {json.dumps(c['worst_probe'])}")
    pl = report["pl"]
    if pl["skipped"]:
        print(f"pl: skipped ({pl['reason']})")
    else:
        print(f"pl: mu={pl['mu']:.6g} mu_hat={pl['mu_hat']:.6g} [{'ok' if pl['ok'] else 'VIOLATED'}]")
    fd = report["finite_difference"]
    print(f"finite differences: max rel err {fd['max_rel_err']:.3g} [{'ok' if fd['ok'] else 'FAILED'}]")
    return EXIT_OK if report["ok"] else EXIT_FAIL


def fit_aggregate(agg: AggregateTrace, window=None, axis: str = "iteration", quantity: str = "min_prefix") -> dict:
    if quantity == "mean_suboptimality" and agg.optimum_value is None:
        raise ConfigError("--quantity mean_suboptimality needs an aggregate with optimum_value")
    values = getattr(agg, quantity)
    if axis == "iteration":
        x = agg.t
    else:
        if agg.eta_sum is None:
            raise ConfigError("--axis eta_sum needs an aggregate with eta_sum")
        x = agg.eta_sum
    fit = fit_rate(window=window, t=x, values=values)
    out = {"axis": axis, "quantity": quantity, "fit": fit.to_dict()}
    if agg.eta_sum is not None:
        tw = None
        if window is not None and axis == "iteration":
            tw = window
        elif window is not None:
            m = (agg.eta_sum >= window[0]) & (agg.eta_sum <= window[1])
            tw = (float(agg.t[m].min()), float(agg.t[m].max()))
        out["bound_ratio"] = bound_ratio_check(agg, None, tw).to_dict()
    return out


def cmd_fit(args) -> int:
    path = Path(args.aggregate)
    if not path.is_file():
        raise ConfigError(f"aggregate file not found: {path}")
    try:
        agg = AggregateTrace.read_json(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: not a valid aggregate ({exc})") from None
    try:
        out = fit_aggregate(agg, _parse_window(args.window), args.axis, args.quantity)
    except InsufficientPointsError as exc:
        _err(str(exc))
        return EXIT_FAIL
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    base = cfg.resolve(cfg.out)
    rows = []
    keys = sorted(cfg.sweep)
    for k, (assignment, cell) in enumerate(sweep_cells(cfg)):
        cell_dir = base / f"cell_{k:03d}"
        res = run_experiment(replace(cell, out=str(cell_dir.resolve())))
        write_result(res, cell_dir)
        agg = res.aggregate
        rows.append({
            "cell": k, **{key: assignment.get(key) for key in keys},
            "n_seeds": 0 if agg is None else agg.n_seeds,
            "diverged_seeds": len(res.meta["diverged_seeds"]),
            "final_mean_risk": "" if agg is None else repr(float(agg.mean_risk[-1])),
            "final_min_prefix": "" if agg is None else repr(float(agg.min_prefix[-1])),
        })
        print(f"cell {k}: {assignment} -> {cell_dir}")
    base.mkdir(parents=True, exist_ok=True)
    with open(base / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return EXIT_OK if any(r["n_seeds"] for r in rows) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holdersgd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, seeds=True):
        sp.add_argument("--config", required=True, help="TOML experiment config")
        sp.add_argument("--out", help="output directory (overrides the config)")
        if seeds:
            sp.add_argument("--seeds", help="seed list such as '0-19' or '0,3,5' (overrides the config)")
        return sp

    with_config(sub.add_parser("run", help="run all seeds, write traces, aggregate.json and meta.json")).set_defaults(func=cmd_run)
    with_config(sub.add_parser("verify", help="check the smoothness and PL certificates"), seeds=False).set_defaults(func=cmd_verify)
    with_config(sub.add_parser("sweep", help="run every cell of the [sweep] table")).set_defaults(func=cmd_sweep)
    f = sub.add_parser("fit", help="fit a log-log rate to an aggregate.json")
    f.add_argument("aggregate", help="path to aggregate.json")
    f.add_argument("--window", help="'lo,hi' range on the chosen axis")
    f.add_argument("--axis", choices=("iteration", "eta_sum"), default="iteration")
    f.add_argument("--quantity", choices=QUANTITIES, default="min_prefix")
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        # malformed data files and schedule parameters surface as ValueError
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
