"""Run a config and report its empirical rates.

Writes the usual run outputs, then fits log-log slopes of min_prefix (and of
the mean suboptimality when the objective has a PL certificate) on the
geometric checkpoints, plus the bound ratio min_prefix * sum eta.

    python scripts/rate_report.py configs/welsch_poly.toml --out /tmp/welsch
"""
import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from holdersgd.analysis import bound_ratio_check, fit_rate
from holdersgd.config import load_config
from holdersgd.core import geometric_checkpoints
from holdersgd.experiments import run_experiment, write_result


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: the config's)")
    args = p.parse_args(argv)
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, out=str(Path(args.out).resolve()))
    res = run_experiment(cfg)
    write_result(res, cfg.resolve(cfg.out))
    if res.aggregate is None:
        print("every seed diverged")
        return 1
    agg = res.aggregate.subset(geometric_checkpoints(cfg.T))
    window = tuple(cfg.fit.get("window", (cfg.T / 100, cfg.T)))
    report = {
        "min_prefix": fit_rate(window=window, t=agg.t, values=agg.min_prefix).to_dict(),
        "bound_ratio": bound_ratio_check(agg, res.schedule, window).to_dict(),
        "diverged_seeds": res.meta["diverged_seeds"],
    }
    if agg.optimum_value is not None:
        report["mean_suboptimality"] = fit_rate(window=window, t=agg.t, values=agg.mean_suboptimality).to_dict()
    print(json.dumps(report, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
