"""Experiment configuration files.

Configs are TOML.  Top-level keys::

    T = 100000                  # horizon (required)
    seeds = [0, 1, 2]           # or {start = 0, count = 20}
    checkpoint_policy = "geometric2"   # or "all", or an explicit list of t values
    extra_checkpoints = [1000]  # optional extra checkpoint times
    tail_checkpoints = {fraction = 0.9, count = 11}   # optional evenly spaced tail checkpoints
    divergence_factor = 1e6
    out = "runs/example"        # output directory, relative to the config file
    processes = 1

    [objective]                 # family + parameters + data source
    family = "welsch"           # least_squares | welsch | holder_p | interpolating_least_squares
    c = 1.0                     # welsch scale; holder_p takes alpha_loss
    L_override = 0.5            # optional: declare a different L (checker self-tests)
    data = {synthetic = {n = 100, d = 10, seed = 0, noise = 0.5, design = "sphere"}}
    # or data = {path = "data.csv"}; interpolating_least_squares takes n, d, seed directly

    [schedule]                  # kind + named parameters; steps may be "1/L", "mu/L^2", "4/L"
    kind = "polynomial"
    eta1 = "1/L"
    theta = 0.75

    [kernel]                    # optional: run functional SGD instead
    kind = "gaussian"           # sigma defaults to the median heuristic

    [tolerances]                # optional overrides of checker defaults
    [fit]                       # optional: window = [1000, 100000]
    [sweep]                     # optional: "schedule.theta" = [0.6, 0.75, 0.9]

Every default is filled in by :func:`load_config`, and ``to_dict`` returns
the effective config that gets echoed into ``meta.json``.
"""
from __future__ import annotations

import copy
import itertools
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import Objective, SmoothnessSpec, read_dataset_csv
from .engine import RunConfig
from .objectives import (
    make_interpolating_least_squares,
    make_objective,
    synthetic_dataset,
    with_smoothness,
)
from .schedules import Schedule, schedule_from_dict

DEFAULT_TOLERANCES = {
    "relative": 1e-8,
    "slope": 0.15,
    "radius": 10.0,
    "n_probes": 10_000,
    "n_pl_probes": 1_000,
    "fd_h_rel": 1e-5,
    "fd_rel_err": 1e-5,
    "fd_points": 100,
}

OBJECTIVE_FAMILIES = ("least_squares", "welsch", "holder_p", "interpolating_least_squares")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    objective: dict
    schedule: dict
    T: int
    seeds: list
    kernel: dict | None = None
    checkpoint_policy: str | list = "geometric2"
    tail_checkpoints: dict | None = None
    extra_checkpoints: list = field(default_factory=list)
    divergence_factor: float = 1e6
    out: str = "out"
    processes: int = 1
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    fit: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    base_dir: str = field(default=".", compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ExperimentConfig":
        return _validate(copy.deepcopy(raw), str(base_dir))

    def run_config(self, seed: int | None = None) -> RunConfig:
        extra = tuple(self.extra_checkpoints)
        if self.tail_checkpoints:
            extra += tail_grid(self.T, self.tail_checkpoints["fraction"], self.tail_checkpoints["count"])
        policy = self.checkpoint_policy if isinstance(self.checkpoint_policy, str) else tuple(self.checkpoint_policy)
        return RunConfig(self.T, self.seeds[0] if seed is None else seed, policy,
                         self.divergence_factor, extra)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def tail_grid(T: int, fraction: float, count: int) -> tuple[int, ...]:
    """``count`` evenly spaced integer times in [fraction T, T]."""
    lo = max(1, math.ceil(fraction * T))
    if count < 2 or lo >= T:
        return (T,)
    return tuple(sorted({round(lo + k * (T - lo) / (count - 1)) for k in range(count)}))


def _require(d: dict, key: str, where: str, types):
    if key not in d:
        raise ConfigError(f"{where}.{key}: missing required field")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, types):
        raise ConfigError(f"{where}.{key}: expected {types}, got {type(v).__name__} {v!r}")
    return v


def _parse_seeds(v) -> list[int]:
    if isinstance(v, dict):
        try:
            start, count = int(v.get("start", 0)), int(v["count"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("seeds: expected a list or {start, count}") from None
        return list(range(start, start + count))
    if isinstance(v, str):
        return parse_seed_string(v)
    if not isinstance(v, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in v):
        raise ConfigError(f"seeds: expected a list of integers, got {v!r}")
    return list(v)


def parse_seed_string(s: str) -> list[int]:
    """'0-19' or '1,2,5' or '0-3,7'."""
    out = []
    try:
        for part in s.split(","):
            part = part.strip()
            if "-" in part[1:]:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"seeds: cannot parse {s!r}") from None
    return out


def _validate(raw: dict, base_dir: str) -> ExperimentConfig:
    known = {"objective", "schedule", "T", "seeds", "kernel", "checkpoint_policy", "tail_checkpoints",
             "extra_checkpoints", "divergence_factor", "out", "processes", "tolerances", "fit", "sweep"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {', '.join(sorted(unknown))}")
    T = _require(raw, "T", "config", int)
    if T < 1:
        raise ConfigError(f"config.T: must be >= 1, got {T}")
    seeds = _parse_seeds(raw.get("seeds", [0]))
    if not seeds:
        raise ConfigError("seeds: need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds: must be distinct, got {seeds}")

    obj = _require(raw, "objective", "config", dict)
    family = _require(obj, "family", "objective", str)
    if family not in OBJECTIVE_FAMILIES:
        raise ConfigError(f"objective.family: unknown family {family!r}; expected one of {', '.join(OBJECTIVE_FAMILIES)}")
    if family == "interpolating_least_squares":
        for k in ("n", "d", "seed"):
            _require(obj, k, "objective", int)
    else:
        data = _require(obj, "data", "objective", dict)
        if ("path" in data) == ("synthetic" in data):
            raise ConfigError("objective.data: give exactly one of 'path' or 'synthetic'")
        if "path" in data:
            p = Path(data["path"])
            p = p if p.is_absolute() else Path(base_dir) / p
            if not p.is_file():
                raise ConfigError(f"objective.data.path: dataset file not found: {p}")
        else:
            syn = data["synthetic"]
            if not isinstance(syn, dict):
                raise ConfigError("objective.data.synthetic: expected a table")
            for k in ("n", "d", "seed"):
                _require(syn, k, "objective.data.synthetic", int)
            syn.setdefault("noise", 0.1)
            syn.setdefault("design", "gaussian")
            syn.setdefault("planted", True)
        if family == "welsch":
            obj.setdefault("c", 1.0)
        if family == "holder_p":
            _require(obj, "alpha_loss", "objective", (int, float))

    sched = _require(raw, "schedule", "config", dict)
    _require(sched, "kind", "schedule", str)

    kernel = raw.get("kernel")
    if kernel is not None:
        if not isinstance(kernel, dict) or kernel.get("kind") not in ("linear", "gaussian"):
            raise ConfigError("kernel.kind: expected 'linear' or 'gaussian'")
        if family not in ("least_squares", "welsch", "holder_p"):
            raise ConfigError(f"kernel: not supported with objective family {family!r}")
        if kernel["kind"] == "gaussian":
            kernel.setdefault("sigma", None)

    policy = raw.get("checkpoint_policy", "geometric2")
    if isinstance(policy, list):
        if not all(isinstance(t, int) for t in policy):
            raise ConfigError("checkpoint_policy: explicit list must hold integers")
    elif policy not in ("geometric2", "all"):
        raise ConfigError(f"checkpoint_policy: expected 'geometric2', 'all' or a list, got {policy!r}")

    tail = raw.get("tail_checkpoints")
    if tail is not None:
        if not isinstance(tail, dict) or not 0 < float(tail.get("fraction", -1)) < 1:
            raise ConfigError("tail_checkpoints: expected {fraction in (0,1), count}")
        tail = {"fraction": float(tail["fraction"]), "count": int(tail.get("count", 11))}

    extra_cps = raw.get("extra_checkpoints", [])
    if not isinstance(extra_cps, list) or not all(isinstance(t, int) and not isinstance(t, bool) for t in extra_cps):
        raise ConfigError("extra_checkpoints: expected a list of integers")

    factor = float(raw.get("divergence_factor", 1e6))
    if not factor > 1:
        raise ConfigError("divergence_factor: must exceed 1")
    tol = dict(DEFAULT_TOLERANCES)
    extra_tol = raw.get("tolerances", {})
    unknown = set(extra_tol) - set(tol)
    if unknown:
        raise ConfigError(f"tolerances: unknown key(s) {', '.join(sorted(unknown))}")
    tol.update(extra_tol)
    sweep = raw.get("sweep", {})
    for k, v in sweep.items():
        if "." not in k or not isinstance(v, list) or not v:
            raise ConfigError(f"sweep.{k}: expected '<section>.<param>' = [values]")
    return ExperimentConfig(obj, sched, T, seeds, kernel, policy, tail, list(extra_cps), factor, str(raw.get("out", "out")),
                            int(raw.get("processes", 1)), tol, dict(raw.get("fit", {})), sweep, base_dir)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return _validate(raw, str(path.parent))


def build_objective(cfg: ExperimentConfig) -> Objective:
    spec = cfg.objective
    family = spec["family"]
    if family == "interpolating_least_squares":
        obj = make_interpolating_least_squares(spec["n"], spec["d"], spec["seed"])
    else:
        data_spec = spec["data"]
        if "path" in data_spec:
            data = read_dataset_csv(cfg.resolve(data_spec["path"]))
        else:
            syn = data_spec["synthetic"]
            data = synthetic_dataset(syn["n"], syn["d"], syn["seed"], syn["noise"], syn["design"], syn["planted"])
        params = {k: spec[k] for k in ("c", "alpha_loss") if k in spec}
        obj = make_objective(family, data, **params)
    if "L_override" in spec:
        obj = with_smoothness(obj, float(spec["L_override"]))
    return obj


def build_schedule(cfg: ExperimentConfig, smoothness: SmoothnessSpec, pl=None) -> Schedule:
    try:
        return schedule_from_dict(cfg.schedule, smoothness.alpha, smoothness, pl)
    except KeyError as exc:
        raise ConfigError(f"schedule.{exc.args[0]}: missing required field") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"schedule: {exc}") from None


def sweep_cells(cfg: ExperimentConfig) -> list[tuple[dict, ExperimentConfig]]:
    """Cartesian product over the sweep table; one config per cell."""
    if not cfg.sweep:
        return [({}, cfg)]
    keys = sorted(cfg.sweep)
    cells = []
    for values in itertools.product(*(cfg.sweep[k] for k in keys)):
        raw = cfg.to_dict()
        raw["sweep"] = {}
        assignment = dict(zip(keys, values))
        for dotted, v in assignment.items():
            node = raw
            *parents, leaf = dotted.split(".")
            for p in parents:
                if node.get(p) is None:
                    raise ConfigError(f"sweep.{dotted}: no section {p!r}")
                node = node[p]
            node[leaf] = v
        cells.append((assignment, _validate(raw, cfg.base_dir)))
    return cells
