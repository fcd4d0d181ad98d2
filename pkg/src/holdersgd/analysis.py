"""Checkers for the smoothness and PL assumptions, plus rate fitting.

Probe design
------------
Inequality checkers draw probes from ``numpy.random.default_rng(seed)``
inside the ball of the given radius around the origin.  A third of the pairs
are independent uniform points, a third are local pairs (w, w + r v) with r
log-uniform in [1e-6, 1] * radius, and a third are placed on the hyperplane
where the sampled residual u = <w, x> - y is small, with the second point
displaced along x.  The last group is where Hölder ratios of curved losses
peak, so a mis-stated constant is found quickly.

Tolerances are relative: an inequality lhs <= rhs counts as violated when
lhs > rhs + tol * scale, with scale = rhs for the Hölder and self-bounding
checks and the sum of term magnitudes for the descent inequality (whose
linearization gap suffers cancellation).  ``worst_ratio`` is the largest
lhs / (rhs + tol * scale), so it exceeds 1 exactly when a violation exists.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .core import AggregateTrace, Objective, Trace
from .schedules import Schedule

DEFAULT_RADIUS = 10.0
DEFAULT_TOL = 1e-8
DEFAULT_SLOPE_TOL = 0.15
PROBE_SEED = 20190501


class EstimationUndefinedError(ValueError):
    pass


class InsufficientPointsError(ValueError):
    pass


@dataclass
class ViolationReport:
    check_name: str
    n_probes: int
    n_violations: int
    worst_ratio: float
    worst_probe: dict = field(default_factory=dict)
    seed: int = PROBE_SEED
    tolerances: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict:
        return asdict(self)


def uniform_ball(rng: np.random.Generator, m: int, d: int, radius: float) -> np.ndarray:
    v = rng.standard_normal((m, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (radius * rng.random(m) ** (1.0 / d))[:, None]


def _to_ball(W: np.ndarray, radius: float) -> np.ndarray:
    nrm = np.linalg.norm(W, axis=1, keepdims=True)
    return np.where(nrm > radius, W * (radius / np.maximum(nrm, 1e-300)), W)


def probe_pairs(obj: Objective, m: int, radius: float, seed: int):
    """Return (W, W2, idx): m probe pairs and the sample index drawn for each."""
    rng = np.random.default_rng(seed)
    X, y = obj.dataset.X, obj.dataset.y
    d = obj.d
    idx = rng.integers(0, obj.n, size=m)
    W = uniform_ball(rng, m, d, radius)
    W2 = uniform_ball(rng, m, d, radius)
    k1, k2 = m // 3, 2 * m // 3

    local = slice(k1, k2)
    v = rng.standard_normal((k2 - k1, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * 10.0 ** rng.uniform(-6.0, 0.0, size=k2 - k1)
    W2[local] = _to_ball(W[local] + r[:, None] * v, radius)

    tgt = slice(k2, m)
    x = X[idx[tgt]]
    xn2 = np.sum(x * x, axis=1)
    xn2 = np.where(xn2 > 0, xn2, 1.0)
    scale = getattr(obj.loss, "c", 1.0)
    s = scale * rng.standard_normal(m - k2)
    u = np.sum(W[tgt] * x, axis=1) - y[idx[tgt]]
    W[tgt] = W[tgt] - ((u - s) / xn2)[:, None] * x
    step = radius * 10.0 ** rng.uniform(-6.0, -0.5, size=m - k2) * rng.choice([-1.0, 1.0], size=m - k2)
    W2[tgt] = W[tgt] + (step / np.sqrt(xn2))[:, None] * x
    return W, W2, idx


def _split_probe_pairs(obj: Objective, m: int, half: int, radius: float, seed: int):
    """Two independent probe sets of sizes half and m - half, stacked."""
    a = probe_pairs(obj, half, radius, seed) if half else (np.empty((0, obj.d)),) * 2 + (np.empty(0, int),)
    b = probe_pairs(obj, m - half, radius, seed + 1)
    return tuple(np.concatenate([p, q]) for p, q in zip(a, b))


def _report(name, lhs, rhs, slack, tol, radius, seed, W, W2=None, idx=None, **extra) -> ViolationReport:
    bound = rhs + slack
    viol = lhs > bound
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, lhs / bound, np.where(lhs > 0, np.inf, 0.0))
    k = int(np.argmax(ratio)) if ratio.size else 0
    probe = {"w": W[k].tolist(), "lhs": float(lhs[k]), "rhs": float(rhs[k])}
    if W2 is not None:
        probe["w_tilde"] = W2[k].tolist()
    if idx is not None:
        probe["sample"] = int(idx[k])
    probe.update({key: val[k] if isinstance(val, np.ndarray) else val for key, val in extra.items()})
    return ViolationReport(name, int(lhs.size), int(np.count_nonzero(viol)), float(ratio[k]) if ratio.size else 0.0,
                           probe, seed, {"relative": tol, "radius": radius})


def _sample_terms(obj: Objective, W: np.ndarray, idx: np.ndarray):
    x = obj.dataset.X[idx]
    u = np.sum(W * x, axis=1) - obj.dataset.y[idx]
    return u, x


def check_holder(obj: Objective, n_pairs: int = 10_000, radius: float = DEFAULT_RADIUS,
                 tol: float = DEFAULT_TOL, seed: int = PROBE_SEED) -> ViolationReport:
    """Count pairs with ||grad f(w,z) - grad f(w~,z)|| > (1+tol) L ||w - w~||^alpha."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    a, L = obj.smoothness.alpha, obj.smoothness.L
    W, W2, idx = probe_pairs(obj, n_pairs, radius, seed)
    u, x = _sample_terms(obj, W, idx)
    u2, _ = _sample_terms(obj, W2, idx)
    lhs = np.abs(obj.loss.dpsi(u) - obj.loss.dpsi(u2)) * np.linalg.norm(x, axis=1)
    rhs = L * np.linalg.norm(W - W2, axis=1) ** a
    return _report("holder", lhs, rhs, tol * rhs, tol, radius, seed, W, W2, idx)


def check_smooth_a(obj: Objective, n_pairs: int = 10_000, radius: float = DEFAULT_RADIUS,
                   tol: float = DEFAULT_TOL, seed: int = PROBE_SEED) -> ViolationReport:
    """Descent inequality phi(w~) <= phi(w) + <w~ - w, grad phi(w)> + L/(1+alpha) ||w - w~||^(1+alpha).

    The first half of the pairs tests per-sample losses, the second half the
    population objective.  lhs is the linearization gap, rhs the Hölder term.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    a, L = obj.smoothness.alpha, obj.smoothness.L
    half = n_pairs // 2
    W, W2, idx = _split_probe_pairs(obj, n_pairs, half, radius, seed)
    loss = obj.loss
    f1 = np.empty(n_pairs)
    f2 = np.empty(n_pairs)
    inner = np.empty(n_pairs)

    u, x = _sample_terms(obj, W[:half], idx[:half])
    u2, _ = _sample_terms(obj, W2[:half], idx[:half])
    f1[:half] = loss.psi(u)
    f2[:half] = loss.psi(u2)
    inner[:half] = loss.dpsi(u) * np.sum((W2[:half] - W[:half]) * x, axis=1)

    X, y = obj.dataset.X, obj.dataset.y
    R1 = W[half:] @ X.T - y
    R2 = W2[half:] @ X.T - y
    f1[half:] = np.mean(loss.psi(R1), axis=1)
    f2[half:] = np.mean(loss.psi(R2), axis=1)
    G = loss.dpsi(R1) @ X / obj.n
    inner[half:] = np.sum((W2[half:] - W[half:]) * G, axis=1)

    term = L / (1.0 + a) * np.linalg.norm(W - W2, axis=1) ** (1.0 + a)
    gap = f2 - f1 - inner
    slack = tol * (np.abs(f1) + np.abs(f2) + np.abs(inner) + term)
    kind = np.array(["sample"] * half + ["population"] * (n_pairs - half))
    return _report("smooth_a", gap, term, slack, tol, radius, seed, W, W2, idx, objective=kind)


def check_self_bounding(obj: Objective, n_probes: int = 10_000, radius: float = DEFAULT_RADIUS,
                        tol: float = DEFAULT_TOL, seed: int = PROBE_SEED) -> ViolationReport:
    """Self-bounding ||grad phi(w)||^((1+alpha)/alpha) <= (1+alpha) L^(1/alpha) / alpha * phi(w).

    Half the probes test per-sample losses, half the population objective.
    """
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    a, L = obj.smoothness.alpha, obj.smoothness.L
    half = n_probes // 2
    W, W2, idx = _split_probe_pairs(obj, n_probes, half, radius, seed)
    W[: half // 2] = W2[: half // 2]
    W[half: half + (n_probes - half) // 2] = W2[half: half + (n_probes - half) // 2]
    loss = obj.loss
    gnorm = np.empty(n_probes)
    phi = np.empty(n_probes)
    u, x = _sample_terms(obj, W[:half], idx[:half])
    gnorm[:half] = np.abs(loss.dpsi(u)) * np.linalg.norm(x, axis=1)
    phi[:half] = loss.psi(u)
    X, y = obj.dataset.X, obj.dataset.y
    R = W[half:] @ X.T - y
    gnorm[half:] = np.linalg.norm(loss.dpsi(R) @ X / obj.n, axis=1)
    phi[half:] = np.mean(loss.psi(R), axis=1)

    lhs = gnorm ** ((1.0 + a) / a)
    rhs = (1.0 + a) * L ** (1.0 / a) / a * phi
    kind = np.array(["sample"] * half + ["population"] * (n_probes - half))
    return _report("self_bounding", lhs, rhs, tol * rhs, tol, radius, seed, W, None, idx, objective=kind)


def estimate_pl(obj: Objective, n_probes: int = 1000, radius: float = DEFAULT_RADIUS,
                seed: int = PROBE_SEED, optimum_value: float | None = None,
                probes: np.ndarray | None = None, min_gap: float = 1e-10) -> float:
    """Smallest observed ||grad E(w)||^2 / (2 (E(w) - E*)) over probes with E(w) - E* > min_gap.

    A declared PL constant is consistent with the probes iff it is <= the
    returned value.
    """
    if optimum_value is None:
        if obj.pl is None:
            raise EstimationUndefinedError("no optimum value given and objective has no PL certificate")
        optimum_value = obj.pl.optimum_value
    if probes is None:
        rng = np.random.default_rng(seed)
        probes = uniform_ball(rng, n_probes, obj.d, radius)
        if obj.pl is not None and obj.pl.optimum_point is not None:
            # half the probes close to the optimum, at log-uniform distances
            k = n_probes // 2
            v = rng.standard_normal((k, obj.d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            r = radius * 10.0 ** rng.uniform(-4.0, 0.0, size=k)
            probes[:k] = obj.pl.optimum_point + r[:, None] * v
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    X, y = obj.dataset.X, obj.dataset.y
    R = probes @ X.T - y
    E = np.mean(obj.loss.psi(R), axis=1)
    G = obj.loss.dpsi(R) @ X / obj.n
    gap = E - optimum_value
    keep = gap > min_gap
    if not np.any(keep):
        raise EstimationUndefinedError("no probe has positive suboptimality")
    return float(np.min(np.sum(G[keep] ** 2, axis=1) / (2.0 * gap[keep])))


def finite_diff_grad(fn: Callable[[np.ndarray], float], w, h_rel: float = 1e-5) -> np.ndarray:
    """Central differences with step h = h_rel * (1 + ||w||)."""
    if not h_rel > 0:
        raise ValueError("h_rel must be positive")
    w = np.asarray(w, dtype=np.float64)
    h = h_rel * (1.0 + float(np.linalg.norm(w)))
    g = np.empty_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (fn(w + e) - fn(w - e)) / (2.0 * h)
    return g


def gradient_check(obj: Objective, n_points: int = 100, radius: float = DEFAULT_RADIUS,
                   h_rel: float = 1e-5, seed: int = PROBE_SEED) -> np.ndarray:
    """Relative errors ||fd - grad|| / ||grad|| of the population gradient at random points."""
    rng = np.random.default_rng(seed)
    W = uniform_ball(rng, n_points, obj.d, radius)
    errs = np.empty(n_points)
    for k, w in enumerate(W):
        g = obj.grad(w)
        fd = finite_diff_grad(obj.value, w, h_rel)
        errs[k] = np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300)
    return errs


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    n_points: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _line_fit(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    if np.ptp(xs) <= 0:
        raise InsufficientPointsError("abscissae have zero spread")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return float(slope), float(intercept), r2


def _window(t, values, window):
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    lo, hi = (-np.inf, np.inf) if window is None else window
    m = (t >= lo) & (t <= hi)
    if np.count_nonzero(m) < 4:
        raise InsufficientPointsError(f"need >= 4 points in window {window}, got {np.count_nonzero(m)}")
    return t[m], values[m]


def fit_rate(points: Sequence[tuple[float, float]] | None = None, window=None, *, t=None,
             values=None) -> RateFit:
    """Least-squares line through (ln t, ln value); the slope is the empirical rate exponent.

    The window defaults to [t_max / 100, t_max] so the early transient is skipped.
    """
    if points is not None:
        arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        t, values = arr[:, 0], arr[:, 1]
    if window is None and t is not None and len(t):
        t_max = float(np.max(t))
        window = (t_max / 100.0, t_max)
    tw, vw = _window(t, values, window)
    if np.any(vw <= 0) or not np.all(np.isfinite(vw)):
        raise ValueError("rate fitting needs positive finite values in the window")
    slope, intercept, r2 = _line_fit(np.log(tw), np.log(vw))
    return RateFit(slope, intercept, r2, (float(tw[0]), float(tw[-1])), int(tw.size))


def fit_log_linear(t, values, window=None) -> RateFit:
    """Line through (t, ln value); slope is ln of the per-step contraction factor."""
    tw, vw = _window(t, values, window)
    if np.any(vw <= 0):
        raise ValueError("log-linear fitting needs positive values")
    slope, intercept, r2 = _line_fit(tw, np.log(vw))
    return RateFit(slope, intercept, r2, (float(tw[0]), float(tw[-1])), int(tw.size))


@dataclass(frozen=True)
class BoundRatio:
    max_ratio: float
    median_ratio: float
    t: tuple[int, ...]
    ratios: tuple[float, ...]

    @property
    def spread(self) -> float:
        return self.max_ratio / self.median_ratio

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "median_ratio": self.median_ratio, "spread": self.spread,
                "t": list(self.t), "ratios": list(self.ratios)}


def bound_ratio_check(agg: AggregateTrace, sched: Schedule | None = None, window=None) -> BoundRatio:
    """ratio(T) = min_prefix(T) * sum_{t<=T} eta_t at each checkpoint in the window.

    The bound min_prefix(T) <= C / sum eta_t holds for some C exactly when the
    ratios stay bounded, so the max/median spread is the quantity to watch.
    """
    t = agg.t
    if sched is not None:
        eta_sum = np.cumsum(sched.etas(int(t[-1])))[t - 1]
    elif agg.eta_sum is not None:
        eta_sum = agg.eta_sum
    else:
        raise ValueError("need a schedule or an aggregate carrying eta_sum")
    lo, hi = (-np.inf, np.inf) if window is None else window
    m = (t >= lo) & (t <= hi)
    if not np.any(m):
        raise InsufficientPointsError(f"no checkpoints in window {window}")
    ratios = agg.min_prefix[m] * eta_sum[m]
    return BoundRatio(float(np.max(ratios)), float(np.median(ratios)),
                      tuple(int(v) for v in t[m]), tuple(float(r) for r in ratios))


@dataclass
class ConvergenceReport:
    n_pass: int
    n_fail: int
    per_seed_oscillation: dict
    diverged_seeds: list = field(default_factory=list)
    per_seed_final_grad_norm_sq: dict = field(default_factory=dict)
    eps: float = 0.0
    grad_eps: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def as_convergence_check(traces: Sequence[Trace], tail_fraction: float, eps: float,
                         grad_eps: float | None = None) -> ConvergenceReport:
    """Per-seed tail stability: max - min of E(w_t) over t in [tail_fraction T, T] must be <= eps.

    With ``grad_eps`` set (PL runs), the final squared gradient norm must also
    be <= grad_eps.  Diverged traces fail and are listed separately.
    """
    if not 0.0 < tail_fraction < 1.0:
        raise ValueError("tail_fraction must lie in (0, 1)")
    n_pass = n_fail = 0
    osc, final_g, diverged = {}, {}, []
    for tr in traces:
        if tr.diverged:
            n_fail += 1
            diverged.append(tr.seed)
            continue
        t = tr.t
        tail = t >= tail_fraction * t[-1]
        if np.count_nonzero(tail) < 2:
            raise ValueError(f"seed {tr.seed}: fewer than 2 checkpoints in the tail window")
        risk = tr.risk[tail]
        o = float(np.max(risk) - np.min(risk))
        g_final = float(tr.grad_norm_sq[-1])
        osc[tr.seed] = o
        final_g[tr.seed] = g_final
        ok = o <= eps and (grad_eps is None or g_final <= grad_eps)
        n_pass += ok
        n_fail += not ok
    return ConvergenceReport(n_pass, n_fail, osc, diverged, final_g, eps, grad_eps)


def refine_optimum(obj: Objective, starts: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
    """Numerical minimum of E over local searches from the given starting points (L-BFGS)."""
    best_val, best_w = math.inf, None
    for w0 in starts:
        res = optimize.minimize(obj.value_and_grad, np.asarray(w0, dtype=np.float64), jac=True,
                                method="L-BFGS-B", options={"gtol": 1e-14, "ftol": 1e-16, "maxiter": 10_000})
        if res.fun < best_val:
            best_val, best_w = float(res.fun), res.x
    if best_w is None:
        raise ValueError("need at least one starting point")
    return best_val, best_w
