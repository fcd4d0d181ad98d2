"""Step-size sequences t -> eta_t and their summability diagnostics.

Schedules are pure functions of t.  Parameterizations outside the range
covered by the convergence theorems still construct; they carry
``theorem_valid = False`` and emit a :class:`ScheduleWarning`, so failure
modes can be run on purpose.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import PLSpec, SmoothnessSpec

KINDS = ("polynomial", "log_corrected", "pl_matched", "constant")


class ScheduleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SummabilityFlags:
    sum_eta_divergent: bool
    sum_eta_power_convergent: bool


@dataclass(frozen=True, eq=False)
class Schedule:
    kind: str
    params: dict
    alpha: float
    theorem_valid: bool = True
    reason: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})

    def __call__(self, t):
        """eta_t for scalar or array t (t >= 1)."""
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 1):
            raise ValueError("schedules are defined for t >= 1")
        p = self.params
        if self.kind == "polynomial":
            out = p["eta1"] * t_arr ** (-p["theta"])
        elif self.kind == "log_corrected":
            out = p["eta1"] * (t_arr * np.log1p(t_arr) ** p["beta"]) ** (-1.0 / (1.0 + p["alpha"]))
        elif self.kind == "pl_matched":
            out = 2.0 / ((t_arr + 1.0) * p["mu"])
        else:
            out = np.full_like(t_arr, p["eta"])
        return float(out) if out.ndim == 0 else out

    def etas(self, T: int) -> np.ndarray:
        return np.asarray(self(np.arange(1, T + 1)), dtype=np.float64)

    def flags(self, alpha: float | None = None) -> SummabilityFlags:
        """Analytic divergence of sum eta_t and convergence of sum eta_t^(1+alpha)."""
        a = self.alpha if alpha is None else float(alpha)
        p = self.params
        if self.kind == "polynomial":
            return SummabilityFlags(p["theta"] <= 1.0, p["theta"] * (1.0 + a) > 1.0)
        if self.kind == "log_corrected":
            # eta_t^q ~ (t log^beta t)^(-q/(1+alpha_s)); p-series with log correction
            def converges(q):
                e = q / (1.0 + p["alpha"])
                return e > 1.0 or (e == 1.0 and p["beta"] * e > 1.0)
            return SummabilityFlags(not converges(1.0), converges(1.0 + a))
        if self.kind == "pl_matched":
            return SummabilityFlags(True, a > 0.0)
        return SummabilityFlags(True, False)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def _flag_invalid(kind: str, reason: str) -> None:
    warnings.warn(f"{kind} schedule outside theorem range: {reason}", ScheduleWarning, stacklevel=3)


def poly_schedule(eta1: float, theta: float, alpha: float) -> Schedule:
    """eta_t = eta1 * t^-theta."""
    if not eta1 > 0:
        raise ValueError(f"eta1 must be positive, got {eta1}")
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    valid = theta > 1.0 / (1.0 + alpha)
    reason = "" if valid else f"theta={theta} <= 1/(1+alpha)={1.0 / (1.0 + alpha):.6g}"
    if not valid:
        _flag_invalid("polynomial", reason)
    return Schedule("polynomial", {"eta1": eta1, "theta": theta}, alpha, valid, reason)


def log_schedule(eta1: float, beta: float, alpha: float) -> Schedule:
    """eta_t = eta1 * (t * ln(t+1)^beta)^(-1/(1+alpha))."""
    if not eta1 > 0:
        raise ValueError(f"eta1 must be positive, got {eta1}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    valid = beta > 1.0
    reason = "" if valid else f"beta={beta} <= 1"
    if not valid:
        _flag_invalid("log_corrected", reason)
    return Schedule("log_corrected", {"eta1": eta1, "beta": beta, "alpha": alpha}, alpha, valid, reason)


@dataclass(frozen=True)
class PLScheduleCert:
    """Threshold t0 = 2 L^(2/alpha) mu^(-(1+alpha)/alpha) for the PL-matched schedule."""

    mu: float
    t0: float
    L: float = field(default=1.0)
    alpha: float = field(default=1.0)

    def holds_at(self, t) -> np.ndarray:
        """Whether L^2 eta_t^(1+alpha) <= mu eta_t at t."""
        eta = 2.0 / ((np.asarray(t, dtype=np.float64) + 1.0) * self.mu)
        return self.L**2 * eta ** (1.0 + self.alpha) <= self.mu * eta


def pl_threshold(mu: float, L: float, alpha: float) -> float:
    return 2.0 * L ** (2.0 / alpha) * mu ** (-(1.0 + alpha) / alpha)


def pl_schedule(mu: float, smoothness: SmoothnessSpec) -> tuple[Schedule, PLScheduleCert]:
    """eta_t = 2 / ((t+1) mu), with the iteration threshold past which it contracts."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    a, L = smoothness.alpha, smoothness.L
    cert = PLScheduleCert(mu=mu, t0=pl_threshold(mu, L, a), L=L, alpha=a)
    return Schedule("pl_matched", {"mu": mu}, a), cert


def const_schedule(eta: float, pl: PLSpec, smoothness: SmoothnessSpec) -> Schedule:
    """Constant step; theorem-valid iff eta <= mu / L^2 and alpha = 1."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    bound = pl.mu / smoothness.L**2
    problems = []
    if eta > bound:
        problems.append(f"eta={eta:.6g} > mu/L^2={bound:.6g}")
    if smoothness.alpha != 1.0:
        problems.append(f"alpha={smoothness.alpha} != 1")
    reason = "; ".join(problems)
    if problems:
        _flag_invalid("constant", reason)
    return Schedule("constant", {"eta": eta}, smoothness.alpha, not problems, reason)


@dataclass(frozen=True)
class SummabilityReport:
    partial_sum_eta: float
    partial_sum_eta_power: float
    flags: SummabilityFlags


def summability_report(s: Schedule, alpha: float, T: int, chunk: int = 1 << 20) -> SummabilityReport:
    """Partial sums of eta_t and eta_t^(1+alpha) up to T, with the analytic flags."""
    if T < 1:
        raise ValueError("T must be >= 1")
    total = 0.0
    total_pow = 0.0
    for start in range(1, T + 1, chunk):
        t = np.arange(start, min(start + chunk, T + 1), dtype=np.float64)
        eta = s(t)
        total += math.fsum(eta)
        total_pow += math.fsum(eta ** (1.0 + alpha))
    return SummabilityReport(total, total_pow, s.flags(alpha))


_STEP_EXPR = re.compile(r"^\s*(?P<c>[0-9.eE+-]+\s*\*?\s*)?(?P<num>mu)?\s*/\s*(?P<den>L\^2|L)\s*$")


def resolve_step_expr(expr: str, smoothness: SmoothnessSpec | None, pl: PLSpec | None) -> float:
    """Evaluate step expressions such as ``"1/L"``, ``"0.5/L"``, ``"mu/L^2"`` or ``"4/L"``."""
    m = _STEP_EXPR.match(expr)
    if m is None or (m.group("c") is None and m.group("num") is None):
        raise ValueError(f"cannot parse step expression {expr!r}")
    if smoothness is None:
        raise ValueError(f"step expression {expr!r} needs a smoothness certificate")
    c = float(m.group("c").replace("*", "")) if m.group("c") else 1.0
    if m.group("num"):
        if pl is None:
            raise ValueError(f"step expression {expr!r} needs a PL certificate")
        c *= pl.mu
    return c / (smoothness.L**2 if m.group("den") == "L^2" else smoothness.L)


def schedule_from_dict(spec: dict, alpha: float, smoothness: SmoothnessSpec | None = None,
                       pl: PLSpec | None = None) -> Schedule:
    """Build a schedule from a config record ``{"kind": ..., <params>}``.

    ``mu`` may be the string "certified" for pl_matched/constant kinds, in which
    case the objective's PL constant is used.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    for key in ("eta1", "eta"):
        if isinstance(spec.get(key), str):
            spec[key] = resolve_step_expr(spec[key], smoothness, pl)
    if kind == "polynomial":
        return poly_schedule(spec["eta1"], spec["theta"], spec.get("alpha", alpha))
    if kind == "log_corrected":
        return log_schedule(spec["eta1"], spec["beta"], spec.get("alpha", alpha))
    if kind == "pl_matched":
        mu = spec.get("mu", "certified")
        if mu == "certified":
            if pl is None:
                raise ValueError("pl_matched schedule with mu='certified' needs a PL certificate")
            mu = pl.mu
        if smoothness is None:
            raise ValueError("pl_matched schedule needs a smoothness certificate")
        return pl_schedule(float(mu), smoothness)[0]
    if kind == "constant":
        eta = spec["eta"]
        if pl is not None and smoothness is not None:
            return const_schedule(float(eta), pl, smoothness)
        if not float(eta) > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        return Schedule("constant", {"eta": float(eta)}, alpha, False, "no PL certificate")
    raise ValueError(f"unknown schedule kind {kind!r}; expected one of {', '.join(KINDS)}")
