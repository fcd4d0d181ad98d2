"""Finite-population objectives with certified Hölder constants.

Every family has the form f(w, z) = psi(<w, x> - y) for a nonnegative scalar
profile psi, so grad f(w, z) = psi'(u) x and the Hölder constant of
grad f(., z) is (Hölder constant of psi') * ||x||^(1+alpha).  Certificates
are computed over the rows of the dataset, since those are the only inputs
SGD can draw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Dataset,
    Objective,
    PLSpec,
    Provenance,
    SmoothnessSpec,
)

FAMILIES = ("least_squares", "welsch", "holder_p")


class NoPLCertificateError(ValueError):
    """Raised when a PL constant cannot be certified (e.g. an all-zero design)."""


@dataclass(frozen=True)
class LossFamilyParams:
    """Scalar loss profile psi(u), u = prediction - target."""

    family: str
    c: float = 1.0
    alpha_loss: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.family == "welsch" and not self.c > 0:
            raise ValueError(f"welsch scale c must be positive, got {self.c}")
        if self.family == "holder_p" and not 0.0 < self.alpha_loss <= 1.0:
            raise ValueError(f"holder_p exponent must lie in (0, 1], got {self.alpha_loss}")

    def psi(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.family == "least_squares":
            return 0.5 * u * u
        if self.family == "welsch":
            return -np.expm1(-(u * u) / (2.0 * self.c**2))
        a = self.alpha_loss
        return np.abs(u) ** (1.0 + a) / (1.0 + a)

    def dpsi(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.family == "least_squares":
            return u.copy()
        if self.family == "welsch":
            c2 = self.c**2
            return (u / c2) * np.exp(-(u * u) / (2.0 * c2))
        # sign(0) = 0, so the removable singularity at u = 0 maps to 0
        return np.sign(u) * np.abs(u) ** self.alpha_loss

    def dpsi_scalar(self, u: float) -> float:
        if self.family == "least_squares":
            return u
        if self.family == "welsch":
            c2 = self.c * self.c
            return (u / c2) * math.exp(-(u * u) / (2.0 * c2))
        if u == 0.0:
            return 0.0
        return math.copysign(abs(u) ** self.alpha_loss, u)

    # loss as a function of (prediction, target), used by the kernel path
    def loss(self, pred, y):
        return self.psi(np.asarray(pred) - np.asarray(y))

    def dloss(self, pred, y):
        return self.dpsi(np.asarray(pred) - np.asarray(y))

    @property
    def holder_exponent(self) -> float:
        return self.alpha_loss if self.family == "holder_p" else 1.0

    @property
    def profile_holder_constant(self) -> float:
        """Hölder constant of psi' with exponent :attr:`holder_exponent`."""
        if self.family == "least_squares":
            return 1.0
        if self.family == "welsch":
            return 1.0 / self.c**2
        return 2.0 ** (1.0 - self.alpha_loss)

    def to_dict(self) -> dict:
        if self.family == "welsch":
            return {"family": self.family, "c": self.c}
        if self.family == "holder_p":
            return {"family": self.family, "alpha_loss": self.alpha_loss}
        return {"family": self.family}


def _max_row_norm(data: Dataset) -> float:
    return float(np.max(np.linalg.norm(data.X, axis=1)))


def least_squares_pl(data: Dataset, rel_tol: float = 1e-10) -> PLSpec:
    """PL certificate for (1/2n)||Xw - y||^2.

    mu is the smallest nonzero eigenvalue of X^T X / n and the optimum is the
    least-norm solution, which keeps the certificate valid for rank-deficient
    designs.
    """
    X, y = data.X, data.y
    evals = np.linalg.eigvalsh(X.T @ X / data.n)
    top = float(evals[-1])
    if top <= 0.0:
        raise NoPLCertificateError("design matrix is identically zero; no PL constant exists")
    mu = float(np.min(evals[evals > rel_tol * top]))
    w_star = np.linalg.lstsq(X, y, rcond=None)[0]
    r = X @ w_star - y
    return PLSpec(mu=mu, optimum_value=float(0.5 * np.mean(r * r)), optimum_point=w_star,
                  provenance=Provenance.NUMERIC_ESTIMATE)


def make_least_squares(data: Dataset) -> Objective:
    """f(w, z) = (<w, x> - y)^2 / 2 with L = max_i ||x_i||^2."""
    if not np.any(data.X):
        raise NoPLCertificateError("design matrix is identically zero; no PL constant exists")
    pl = least_squares_pl(data)
    loss = LossFamilyParams("least_squares")
    smooth = SmoothnessSpec(1.0, _max_row_norm(data) ** 2, Provenance.ANALYTIC)
    resid = data.X @ pl.optimum_point - data.y
    per_sample = np.abs(resid) * np.linalg.norm(data.X, axis=1)
    return Objective(data, loss, smooth, pl, bool(np.max(per_sample) <= 1e-8))


def interpolating_data(n: int, d: int, seed: int) -> tuple[Dataset, np.ndarray]:
    """Standard-normal design with noiseless targets y = <w_planted, x>."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w_planted = rng.standard_normal(d)
    return Dataset(X, X @ w_planted), w_planted


def make_interpolating_least_squares(n: int, d: int, seed: int) -> Objective:
    data, w_planted = interpolating_data(n, d, seed)
    obj = make_least_squares(data)
    pl = obj.pl
    # residuals at the least-norm interpolant are zero up to rounding; pin E* to its exact value
    pl = PLSpec(pl.mu, 0.0, pl.optimum_point, pl.provenance)
    return Objective(data, obj.loss, obj.smoothness, pl, True, planted_point=w_planted)


def make_welsch(data: Dataset, c: float = 1.0) -> Objective:
    """f(w, z) = 1 - exp(-u^2 / (2 c^2)); sup |psi''| = 1/c^2 so L = max ||x||^2 / c^2."""
    if not c > 0:
        raise ValueError(f"welsch scale c must be positive, got {c}")
    loss = LossFamilyParams("welsch", c=float(c))
    smooth = SmoothnessSpec(1.0, _max_row_norm(data) ** 2 / c**2, Provenance.ANALYTIC)
    return Objective(data, loss, smooth)


def scalar_holder_sup(alpha: float, n_grid: int = 200_001) -> float:
    """Brute-force sup of |g(u) - g(v)| / |u - v|^alpha for g(u) = sign(u)|u|^alpha.

    The ratio is scale invariant, so it suffices to fix u = 1 and scan v in [-1, 1).
    """
    v = np.linspace(-1.0, 1.0, n_grid)[:-1]
    g = np.sign(v) * np.abs(v) ** alpha
    return float(np.max(np.abs(1.0 - g) / (1.0 - v) ** alpha))


def make_holder_p(data: Dataset, alpha_loss: float) -> Objective:
    """f(w, z) = |u|^(1+a) / (1+a), whose gradient is a-Hölder but not Lipschitz."""
    if not 0.0 < alpha_loss < 1.0:
        raise ValueError(f"alpha_loss must lie in (0, 1), got {alpha_loss}")
    loss = LossFamilyParams("holder_p", alpha_loss=float(alpha_loss))
    # the analytic candidate 2^(1-a) is attained at v = -u; the scan guards against a wrong bound
    const = max(loss.profile_holder_constant, scalar_holder_sup(alpha_loss))
    L = const * _max_row_norm(data) ** (1.0 + alpha_loss)
    return Objective(data, loss, SmoothnessSpec(alpha_loss, L, Provenance.NUMERIC_ESTIMATE))


def with_smoothness(obj: Objective, L: float) -> Objective:
    """Copy of ``obj`` carrying a different declared L (for checker sensitivity tests)."""
    s = obj.smoothness
    return Objective(obj.dataset, obj.loss, SmoothnessSpec(s.alpha, L, s.provenance),
                     obj.pl, obj.zero_variance_at_optimum, obj.planted_point)


def population_value(obj: Objective, w) -> float:
    """E(w) = (1/n) sum_i f(w, z_i)."""
    return obj.value(w)


def population_grad(obj: Objective, w) -> np.ndarray:
    """grad E(w) = (1/n) sum_i grad f(w, z_i)."""
    return obj.grad(w)


def synthetic_dataset(n: int, d: int, seed: int, noise: float = 0.1, design: str = "gaussian",
                      planted: bool = True) -> Dataset:
    """Regression data y = <w_planted, x> + noise * eps.

    ``design`` picks the input distribution: "gaussian" draws x ~ N(0, I/d)
    (so ||x|| is about 1), "standard" draws x ~ N(0, I), and "sphere" draws x
    uniformly on the unit sphere.  With ``planted=False`` the targets are pure
    N(0, 1) noise.  Inputs, planted model and noise come from one
    ``numpy.random.default_rng(seed)`` stream in that order.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    if design == "gaussian":
        X /= math.sqrt(d)
    elif design == "sphere":
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    elif design != "standard":
        raise ValueError(f"unknown design {design!r}")
    w_planted = rng.standard_normal(d)
    eps = rng.standard_normal(n)
    y = X @ w_planted + noise * eps if planted else eps
    return Dataset(X, y)


def make_objective(family: str, data: Dataset, **params) -> Objective:
    if family == "least_squares":
        return make_least_squares(data)
    if family == "welsch":
        return make_welsch(data, params.get("c", 1.0))
    if family == "holder_p":
        if "alpha_loss" not in params:
            raise ValueError("holder_p needs alpha_loss")
        return make_holder_p(data, params["alpha_loss"])
    raise ValueError(f"unknown objective family {family!r}")

