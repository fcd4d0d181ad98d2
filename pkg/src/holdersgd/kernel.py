"""Functional SGD in a reproducing kernel Hilbert space.

The iterate w_t is stored as a representer expansion sum_i a_i K(c_i, .).
Each step appends the sampled input as a new center with coefficient
-eta_t * loss'(w_t(x_t), y_t); nothing is merged or pruned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Checkpoint,
    Dataset,
    DimensionMismatchError,
    Provenance,
    Sample,
    SmoothnessSpec,
    Trace,
    index_stream,
)
from .engine import RunConfig
from .objectives import LossFamilyParams
from .schedules import Schedule

KERNEL_KINDS = ("linear", "gaussian")


def median_heuristic(X: np.ndarray) -> float:
    """Median distance over distinct pairs of rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return 1.0
    i, j = np.triu_indices(X.shape[0], k=1)
    dist = np.sqrt(np.sum((X[i] - X[j]) ** 2, axis=1))
    med = float(np.median(dist))
    return med if med > 0 else 1.0


@dataclass(frozen=True)
class Kernel:
    kind: str = "gaussian"
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("gaussian kernel needs sigma > 0 (see Kernel.for_data)")

    @classmethod
    def for_data(cls, kind: str, X: np.ndarray, sigma: float | None = None) -> "Kernel":
        """Kernel whose gaussian bandwidth defaults to the median heuristic on ``X``."""
        if kind == "gaussian" and sigma is None:
            sigma = median_heuristic(X)
        return cls(kind, None if kind == "linear" else float(sigma))

    def __call__(self, x, x2) -> float:
        x = np.asarray(x, dtype=np.float64)
        x2 = np.asarray(x2, dtype=np.float64)
        if x.shape != x2.shape:
            raise DimensionMismatchError(f"kernel inputs of shapes {x.shape} and {x2.shape}")
        if self.kind == "linear":
            return float(np.sum(x * x2))
        return math.exp(-float(np.sum((x - x2) ** 2)) / (2.0 * self.sigma**2))

    def gram(self, A: np.ndarray, B: np.ndarray | None = None, chunk: int = 4096) -> np.ndarray:
        """Matrix K(A_i, B_j); elementwise products so that gram(A, B) == gram(B, A).T exactly."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = A if B is None else np.atleast_2d(np.asarray(B, dtype=np.float64))
        if A.shape[1] != B.shape[1]:
            raise DimensionMismatchError(f"inputs of dimension {A.shape[1]} and {B.shape[1]}")
        out = np.empty((A.shape[0], B.shape[0]))
        rows = max(1, chunk // max(1, B.shape[0]))
        for s in range(0, A.shape[0], rows):
            a = A[s:s + rows, None, :]
            if self.kind == "linear":
                out[s:s + rows] = np.sum(a * B[None, :, :], axis=2)
            else:
                out[s:s + rows] = np.exp(-np.sum((a - B[None, :, :]) ** 2, axis=2) / (2.0 * self.sigma**2))
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind} if self.kind == "linear" else {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class RepresenterState:
    centers: np.ndarray
    coeffs: np.ndarray
    kernel: Kernel

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        X = np.asarray(self.centers, dtype=np.float64)
        if X.size == 0:
            X = X.reshape(0, X.shape[-1] if X.ndim == 2 else 0)
        if X.ndim != 2 or X.shape[0] != c.shape[0]:
            raise ValueError(f"{X.shape[0] if X.ndim == 2 else '?'} centers but {c.shape[0]} coefficients")
        X.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "centers", X)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def empty(cls, kernel: Kernel, d: int) -> "RepresenterState":
        """The zero function w_1 = 0."""
        return cls(np.zeros((0, d)), np.zeros(0), kernel)

    def __len__(self):
        return self.coeffs.shape[0]


def predict(state: RepresenterState, x) -> float:
    """w(x) = sum_i a_i K(c_i, x)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if len(state) == 0:
        if state.centers.shape[1] not in (0, x.shape[0]):
            raise DimensionMismatchError(f"state has dimension {state.centers.shape[1]}, input {x.shape[0]}")
        return 0.0
    if x.shape[0] != state.centers.shape[1]:
        raise DimensionMismatchError(f"state has dimension {state.centers.shape[1]}, input {x.shape[0]}")
    return float(state.coeffs @ state.kernel.gram(state.centers, x[None, :])[:, 0])


def kernel_sgd_step(state: RepresenterState, z: Sample, eta: float, loss: LossFamilyParams) -> RepresenterState:
    """One functional SGD step; prior coefficients are left untouched."""
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    pred = predict(state, z.x)
    a = -eta * loss.dpsi_scalar(pred - z.y)
    d = z.x.shape[0]
    centers = np.vstack([state.centers.reshape(-1, d), z.x[None, :]])
    return RepresenterState(centers, np.append(state.coeffs, a), state.kernel)


def rkhs_norm_sq(state: RepresenterState) -> float:
    """||w||^2 = a^T G a, clamped at zero against rounding."""
    if len(state) == 0:
        return 0.0
    a = state.coeffs
    return max(0.0, float(a @ state.kernel.gram(state.centers) @ a))


def _grad_norm_sq(g: np.ndarray, gram: np.ndarray) -> float:
    n = g.shape[0]
    return max(0.0, float(g @ gram @ g) / n**2)


def rkhs_grad_norm_sq(state: RepresenterState, data: Dataset, loss: LossFamilyParams) -> float:
    """||grad E(w)||^2 where grad E(w) = (1/n) sum_i loss'(w(x_i), y_i) K(x_i, .)."""
    preds = np.array([predict(state, x) for x in data.X])
    g = loss.dloss(preds, data.y)
    return _grad_norm_sq(g, state.kernel.gram(data.X))


def kernel_smoothness(loss: LossFamilyParams, kernel: Kernel, data: Dataset) -> SmoothnessSpec:
    """Hölder constant of w -> loss(w(x), y) in the RKHS over the dataset inputs.

    ||K_x||^2 = K(x, x), so L = (Hölder constant of loss') * max_i K(x_i, x_i)^((1+a)/2).
    """
    a = loss.holder_exponent
    diag = np.max(np.diag(kernel.gram(data.X)))
    const = loss.profile_holder_constant * float(diag) ** ((1.0 + a) / 2.0)
    return SmoothnessSpec(a, const, Provenance.NUMERIC_ESTIMATE)


@dataclass(frozen=True, eq=False)
class KernelRun:
    trace: Trace
    state: RepresenterState
    predictions: dict = field(default_factory=dict, repr=False)


def run_kernel(data: Dataset, kernel: Kernel, loss: LossFamilyParams, sched: Schedule, cfg: RunConfig,
               record_predictions: bool = False) -> KernelRun:
    """Functional SGD over ``data`` with the same index stream as :func:`holdersgd.engine.run`.

    Predictions at the n data points are cached and updated in O(n) per step,
    so a checkpoint costs one O(n^2) quadratic form with the data Gram matrix.
    """
    X, y = data.X, data.y
    n, d = X.shape
    T = int(cfg.T)
    indices = index_stream(cfg.seed, n, T).tolist()
    etas = sched.etas(T).tolist()
    record_at = set(cfg.checkpoints())
    gram = kernel.gram(X)
    dpsi = loss.dpsi_scalar

    preds = np.zeros(n)
    center_idx: list[int] = []
    coeffs: list[float] = []
    limit = cfg.divergence_factor * max(float(np.mean(loss.loss(preds, y))), 1.0)
    checkpoints = []
    predictions = {}
    diverged = False
    for t in range(1, T + 1):
        eta = etas[t - 1]
        if t in record_at:
            E = float(np.mean(loss.loss(preds, y)))
            checkpoints.append(Checkpoint(t, E, _grad_norm_sq(loss.dloss(preds, y), gram), eta))
            if record_predictions:
                predictions[t] = preds.copy()
            if not math.isfinite(E) or E > limit:
                diverged = True
                break
        i = indices[t - 1]
        a = -eta * dpsi(float(preds[i]) - y[i])
        if not math.isfinite(a):
            diverged = True
            break
        center_idx.append(i)
        coeffs.append(a)
        preds = preds + a * gram[i]
    state = RepresenterState(X[center_idx].reshape(-1, d), np.array(coeffs), kernel)
    trace = Trace(int(cfg.seed), tuple(checkpoints), diverged, np.array(coeffs))
    return KernelRun(trace, state, predictions)
