"""Domain types shared across the package.

Parameter vectors are plain 1-d float64 numpy arrays; everything else is a
frozen dataclass so it can be shared between worker processes and threads.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .objectives import LossFamilyParams

ParamVector = np.ndarray

#: Name of the generator behind every index stream (see :func:`index_stream`).
GENERATOR_NAME = "philox4x64-10"


class InvalidDimensionError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class Provenance(str, Enum):
    ANALYTIC = "analytic"
    NUMERIC_ESTIMATE = "numeric-estimate"


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        if x.size < 1:
            raise InvalidDimensionError("sample input must have d >= 1")
        if not (np.all(np.isfinite(x)) and math.isfinite(self.y)):
            raise ValueError("sample components must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))


@dataclass(frozen=True, eq=False)
class Dataset:
    """A finite sample, used as the uniform sampling measure over its rows."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.float64, copy=True).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidDimensionError(f"design matrix must be (n>=1, d>=1), got {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DimensionMismatchError(f"{X.shape[0]} inputs but {y.shape[0]} outputs")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains NaN or Inf")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "Dataset":
        if len(samples) < 1:
            raise InvalidDimensionError("dataset needs at least one sample")
        dims = {s.x.size for s in samples}
        if len(dims) != 1:
            raise DimensionMismatchError(f"samples have mixed input dimensions {sorted(dims)}")
        return cls(np.stack([s.x for s in samples]), np.array([s.y for s in samples]))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return [Sample(x, y) for x, y in zip(self.X, self.y)]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y)

    __hash__ = None


def read_dataset_csv(path) -> Dataset:
    """Read a CSV with header ``x_1,...,x_d,y``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        d = len(header) - 1
        expected = [f"x_{j}" for j in range(1, d + 1)] + ["y"]
        if d < 1 or header != expected:
            raise ValueError(f"{path}: header must be {','.join(expected) if d >= 1 else 'x_1,...,x_d,y'}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no samples")
    arr = np.array(rows, dtype=np.float64)
    return Dataset(arr[:, :d], arr[:, d])


def write_dataset_csv(data: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{j}" for j in range(1, data.d + 1)] + ["y"])
        for x, y in zip(data.X, data.y):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def zero_param(d: int) -> ParamVector:
    """The SGD starting point w_1 = 0."""
    if int(d) != d or d < 1:
        raise InvalidDimensionError(f"dimension must be an integer >= 1, got {d!r}")
    return np.zeros(int(d), dtype=np.float64)


def index_stream(seed: int, n: int, T: int) -> np.ndarray:
    """Sample indices i_1..i_T, i.i.d. uniform on {0..n-1}.

    Raw 64-bit words come from Philox4x64-10 with key (seed, 0): block k = 1, 2, ...
    is the bijection applied to the counter (k, 0, 0, 0) and its four output
    words are used in order (this is ``numpy.random.Philox(key=seed)``).  Each
    word r maps to ``floor(r * n / 2**64)``; the multiply-shift map has bias
    below n / 2**64.
    """
    if n < 1 or n >= 2**32:
        raise ValueError("n must be in [1, 2**32)")
    if T < 0:
        raise ValueError("T must be nonnegative")
    raw = np.random.Philox(key=int(seed)).random_raw(int(T)).astype(np.uint64)
    n64 = np.uint64(n)
    hi = raw >> np.uint64(32)
    lo = raw & np.uint64(0xFFFFFFFF)
    # floor(raw*n / 2^64) without 128-bit arithmetic
    idx = (hi * n64 + ((lo * n64) >> np.uint64(32))) >> np.uint64(32)
    return idx.astype(np.int64)


@dataclass(frozen=True)
class SmoothnessSpec:
    """Hölder certificate: ||grad f(w,z) - grad f(v,z)|| <= L ||w - v||^alpha."""

    alpha: float
    L: float
    provenance: Provenance = Provenance.ANALYTIC

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.L > 0.0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "L": self.L, "provenance": self.provenance.value}


@dataclass(frozen=True, eq=False)
class PLSpec:
    """PL certificate E(w) - E* <= ||grad E(w)||^2 / (2 mu); optimum_point None means unknown."""

    mu: float
    optimum_value: float
    optimum_point: np.ndarray | None = None
    provenance: Provenance = Provenance.NUMERIC_ESTIMATE

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.optimum_point is not None:
            p = np.array(self.optimum_point, dtype=np.float64).reshape(-1)
            p.setflags(write=False)
            object.__setattr__(self, "optimum_point", p)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "optimum_value": self.optimum_value,
            "optimum_point": None if self.optimum_point is None else self.optimum_point.tolist(),
            "provenance": self.provenance.value,
        }


@dataclass(frozen=True, eq=False)
class Objective:
    """Finite-population objective E(w) = (1/n) sum_i loss(<w, x_i>, y_i)."""

    dataset: Dataset
    loss: "LossFamilyParams"
    smoothness: SmoothnessSpec
    pl: PLSpec | None = None
    zero_variance_at_optimum: bool = False
    planted_point: np.ndarray | None = field(default=None, repr=False)

    @property
    def loss_family(self) -> str:
        return self.loss.family

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.d,):
            raise DimensionMismatchError(f"expected parameter of shape ({self.d},), got {w.shape}")
        return w

    def residuals(self, w) -> np.ndarray:
        return self.dataset.X @ self._check(w) - self.dataset.y

    def sample_losses(self, w) -> np.ndarray:
        return self.loss.psi(self.residuals(w))

    def sample_grads(self, w) -> np.ndarray:
        """(n, d) array whose i-th row is grad f(w, z_i)."""
        return self.loss.dpsi(self.residuals(w))[:, None] * self.dataset.X

    def sample_loss(self, w, i: int) -> float:
        w = self._check(w)
        u = float(self.dataset.X[i] @ w - self.dataset.y[i])
        return float(self.loss.psi(np.array([u]))[0])

    def sample_grad(self, w, i: int) -> np.ndarray:
        w = self._check(w)
        x = self.dataset.X[i]
        u = float(x @ w - self.dataset.y[i])
        return self.loss.dpsi_scalar(u) * x

    def value(self, w) -> float:
        return float(np.mean(self.sample_losses(w)))

    def grad(self, w) -> np.ndarray:
        X = self.dataset.X
        return X.T @ self.loss.dpsi(self.residuals(w)) / X.shape[0]

    def value_and_grad(self, w) -> tuple[float, np.ndarray]:
        r = self.residuals(w)
        X = self.dataset.X
        return float(np.mean(self.loss.psi(r))), X.T @ self.loss.dpsi(r) / X.shape[0]

    def describe(self) -> dict:
        return {
            "family": self.loss.family,
            "loss_params": self.loss.to_dict(),
            "n": self.n,
            "d": self.d,
            "smoothness": self.smoothness.to_dict(),
            "pl": None if self.pl is None else self.pl.to_dict(),
            "zero_variance_at_optimum": self.zero_variance_at_optimum,
        }


def geometric_checkpoints(T: int) -> list[int]:
    """{1, 2, 4, 8, ...} up to T, plus T itself."""
    if T < 1:
        raise ValueError("T must be >= 1")
    out = []
    t = 1
    while t <= T:
        out.append(t)
        t *= 2
    if out[-1] != T:
        out.append(T)
    return out


def resolve_checkpoints(T: int, policy="geometric2", extra: Iterable[int] = ()) -> list[int]:
    """Checkpoint set for a run of horizon T; t = 1 is always included.

    ``policy`` is "geometric2", "all" (every step) or an explicit iterable of times.
    """
    if policy == "geometric2":
        ts = set(geometric_checkpoints(T))
    elif policy == "all":
        ts = set(range(1, T + 1))
    elif isinstance(policy, str):
        raise ValueError(f"unknown checkpoint policy {policy!r}")
    else:
        ts = {int(t) for t in policy}
    ts.update(int(t) for t in extra)
    ts.add(1)
    return sorted(t for t in ts if 1 <= t <= T)


@dataclass(frozen=True)
class Checkpoint:
    t: int
    risk: float
    grad_norm_sq: float
    eta: float


@dataclass(frozen=True, eq=False)
class Trace:
    seed: int
    checkpoints: tuple[Checkpoint, ...]
    diverged: bool
    final_iterate: np.ndarray
    diagnostics: dict | None = field(default=None, repr=False)
    iterates: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        cps = tuple(self.checkpoints)
        ts = [c.t for c in cps]
        if not ts or ts[0] != 1:
            raise ValueError("first checkpoint must have t = 1")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("checkpoint times must be strictly increasing")
        if not self.diverged and not all(math.isfinite(c.risk) for c in cps):
            raise ValueError("non-diverged trace has non-finite risk")
        object.__setattr__(self, "checkpoints", cps)

    @property
    def t(self) -> np.ndarray:
        return np.array([c.t for c in self.checkpoints], dtype=np.int64)

    @property
    def risk(self) -> np.ndarray:
        return np.array([c.risk for c in self.checkpoints])

    @property
    def grad_norm_sq(self) -> np.ndarray:
        return np.array([c.grad_norm_sq for c in self.checkpoints])

    @property
    def eta(self) -> np.ndarray:
        return np.array([c.eta for c in self.checkpoints])

    def to_csv(self) -> str:
        lines = ["t,risk,grad_norm_sq,eta"]
        for c in self.checkpoints:
            lines.append(f"{c.t},{float(c.risk)!r},{float(c.grad_norm_sq)!r},{float(c.eta)!r}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def read_trace_csv(path, seed: int = 0) -> Trace:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t", "risk", "grad_norm_sq", "eta"]:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        cps = [Checkpoint(int(r["t"]), float(r["risk"]), float(r["grad_norm_sq"]), float(r["eta"]))
               for r in reader]
    diverged = not all(math.isfinite(c.risk) for c in cps)
    return Trace(seed, tuple(cps), diverged, np.array([]))


@dataclass(frozen=True, eq=False)
class AggregateTrace:
    t: np.ndarray
    mean_risk: np.ndarray
    mean_grad_norm_sq: np.ndarray
    min_prefix_grad_norm_sq: np.ndarray
    n_seeds: int
    diverged_seeds: tuple[int, ...] = ()
    eta: np.ndarray | None = None
    eta_sum: np.ndarray | None = None
    optimum_value: float | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64)
        arrays = {}
        for name in ("mean_risk", "mean_grad_norm_sq", "min_prefix_grad_norm_sq", "eta", "eta_sum"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if v.shape != t.shape:
                raise ValueError(f"{name} has shape {v.shape}, expected {t.shape}")
            arrays[name] = v
        if np.any(np.diff(t) <= 0):
            raise ValueError("aggregate times must be strictly increasing")
        mp = arrays["min_prefix_grad_norm_sq"]
        if np.any(np.diff(mp) > 0):
            raise ValueError("min_prefix_grad_norm_sq must be nonincreasing")
        object.__setattr__(self, "t", t)
        for name, v in arrays.items():
            object.__setattr__(self, name, v)
        object.__setattr__(self, "diverged_seeds", tuple(int(s) for s in self.diverged_seeds))

    @property
    def min_prefix(self) -> np.ndarray:
        return self.min_prefix_grad_norm_sq

    @property
    def mean_suboptimality(self) -> np.ndarray:
        if self.optimum_value is None:
            raise ValueError("aggregate carries no optimum value")
        return self.mean_risk - self.optimum_value

    def subset(self, times) -> "AggregateTrace":
        """Restriction to the checkpoints in ``times``; min_prefix keeps its values over all checkpoints."""
        keep = np.isin(self.t, np.asarray(list(times), dtype=np.int64))
        pick = lambda v: None if v is None else v[keep]  # noqa: E731
        return AggregateTrace(self.t[keep], self.mean_risk[keep], self.mean_grad_norm_sq[keep],
                              self.min_prefix_grad_norm_sq[keep], self.n_seeds, self.diverged_seeds,
                              pick(self.eta), pick(self.eta_sum), self.optimum_value)

    def to_dict(self) -> dict:
        out = {
            "t": self.t.tolist(),
            "mean_risk": self.mean_risk.tolist(),
            "mean_grad_norm_sq": self.mean_grad_norm_sq.tolist(),
            "min_prefix": self.min_prefix_grad_norm_sq.tolist(),
            "n_seeds": self.n_seeds,
            "diverged_seeds": list(self.diverged_seeds),
        }
        if self.eta is not None:
            out["eta"] = self.eta.tolist()
        if self.eta_sum is not None:
            out["eta_sum"] = self.eta_sum.tolist()
        if self.optimum_value is not None:
            out["optimum_value"] = self.optimum_value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateTrace":
        missing = {"t", "mean_risk", "mean_grad_norm_sq", "min_prefix", "n_seeds"} - set(d)
        if missing:
            raise ValueError(f"aggregate is missing fields {sorted(missing)}")
        return cls(
            t=d["t"],
            mean_risk=d["mean_risk"],
            mean_grad_norm_sq=d["mean_grad_norm_sq"],
            min_prefix_grad_norm_sq=d["min_prefix"],
            n_seeds=int(d["n_seeds"]),
            diverged_seeds=tuple(d.get("diverged_seeds", ())),
            eta=d.get("eta"),
            eta_sum=d.get("eta_sum"),
            optimum_value=d.get("optimum_value"),
        )

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def read_json(cls, path) -> "AggregateTrace":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
