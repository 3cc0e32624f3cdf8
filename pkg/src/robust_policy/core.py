"""Data model, CSV ingestion, sample splitting and seed plumbing."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal

import numpy as np


class DataError(ValueError):
    """Malformed input data (bad CSV, out-of-range treatment, ...)."""


class NumericalError(RuntimeError):
    """A NaN or otherwise unusable number surfaced during estimation or training."""


# ---------------------------------------------------------------------------
# seeds

def derive_seed(root: int, *labels: str | int) -> int:
    """Child seed from a root seed and a fixed label path.

    Stable across processes and platforms (no reliance on ``hash()``).
    """
    h = hashlib.sha256()
    h.update(str(int(root)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(root: int, *labels: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *labels))


# ---------------------------------------------------------------------------
# data model

@dataclass(frozen=True)
class Sample:
    y: float
    a: int
    x: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Ordered i.i.d. records ``(y, a, x)``; row index is the sample identity.

    Stored column-wise: ``y`` (n,), ``a`` (n,) int, ``x`` (n, d_x).
    """

    y: np.ndarray
    a: np.ndarray
    x: np.ndarray
    d_a: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        a = np.asarray(self.a).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if len(y) == 0:
            raise DataError("dataset is empty")
        if not (len(y) == len(a) == len(x)):
            raise DataError(f"column lengths differ: y={len(y)}, a={len(a)}, x={len(x)}")
        if self.d_a < 2:
            raise DataError(f"treatment arity must be >= 2, got {self.d_a}")
        if x.shape[1] < 1:
            raise DataError("covariate dimension must be >= 1")
        if not np.all(np.isfinite(y)):
            raise DataError(f"non-finite outcome at row {int(np.argmin(np.isfinite(y)))}")
        if not np.all(np.isfinite(x)):
            bad = int(np.argmin(np.isfinite(x).all(axis=1)))
            raise DataError(f"non-finite covariate at row {bad}")
        if not np.all(a == np.round(a)):
            raise DataError("treatments must be integers")
        a = a.astype(np.int64)
        bad = np.nonzero((a < 0) | (a >= self.d_a))[0]
        if len(bad):
            raise DataError(f"treatment out of range, row {int(bad[0])}")
        for arr in (y, a, x):
            arr.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Sample:
        return Sample(float(self.y[i]), int(self.a[i]), self.x[i])

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(self.n))

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.y[idx], self.a[idx], self.x[idx], self.d_a)

    def arm(self, a: int) -> "Dataset":
        return self.subset(np.nonzero(self.a == a)[0])

    def with_outcome(self, y) -> "Dataset":
        return Dataset(np.asarray(y, dtype=float), self.a, self.x, self.d_a)


def load_csv(path: str | Path, d_a: int) -> Dataset:
    """Read a ``y,a,x0,...`` CSV. Row numbers in errors count data rows from 1."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        d_x = len(header) - 2
        expected = ["y", "a"] + [f"x{j}" for j in range(d_x)]
        if d_x < 1 or header != expected:
            raise DataError(f"{path}: header must be y,a,x0,...; got {','.join(header)}")
        ys, as_, xs = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} columns, found {len(row)}, row {row_no}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DataError(f"non-numeric cell, row {row_no}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"non-finite cell, row {row_no}")
            a = vals[1]
            if a != int(a) or not 0 <= a < d_a:
                raise DataError(f"treatment out of range, row {row_no}")
            ys.append(vals[0])
            as_.append(int(a))
            xs.append(vals[2:])
    if not ys:
        raise DataError(f"{path}: empty file")
    return Dataset(np.array(ys), np.array(as_), np.array(xs), d_a)


def save_csv(data: Dataset, path: str | Path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write the core CSV format; ``extra`` appends debug columns (e.g. u, y0, y1).

    Floats are written with ``repr`` so that load_csv restores them bit-exactly.
    """
    extra = extra or {}
    header = ["y", "a"] + [f"x{j}" for j in range(data.d_x)] + list(extra)
    cols = [np.asarray(v) for v in extra.values()]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.y[i])), str(int(data.a[i]))]
            row += [repr(float(v)) for v in data.x[i]]
            row += [repr(c[i].item()) for c in cols]
            w.writerow(row)


def split(data: Dataset, rho: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random partition into a nuisance fold of ceil(rho*n) rows and an estimator fold."""
    if not 0 < rho < 1:
        raise ValueError(f"split fraction must lie in (0, 1), got {rho}")
    if data.n < 2:
        raise DataError("cannot split a dataset with fewer than 2 rows")
    n1 = min(math.ceil(rho * data.n), data.n - 1)
    perm = make_rng(seed, "split").permutation(data.n)
    # folds keep the original row order
    return data.subset(np.sort(perm[:n1])), data.subset(np.sort(perm[n1:]))


# ---------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class LearnerConfig:
    """Nuisance learner family and its knobs.

    ``family``: ``linear`` (raw covariates), ``spline`` (additive cubic B-spline
    basis) or ``mlp`` (ReLU network trained with mini-batch Adam).
    """

    family: Literal["linear", "spline", "mlp"] = "mlp"
    n_knots: int = 8
    degree: int = 3
    hidden: tuple[int, ...] = (64, 64, 32)
    lr: float = 1e-3
    epochs: int = 300
    patience: int = 10
    batch_size: int = 64
    val_fraction: float = 0.2
    l2: float = 1e-6

    def __post_init__(self):
        if self.family not in ("linear", "spline", "mlp"):
            raise ValueError(f"unknown learner family {self.family!r}")
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learner lr, epochs and batch size must be positive")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    rho: float = 0.5
    lr: float = 1e-3
    iterations: int = 300
    gamma: float = 1.0
    objective: Literal["value", "regret"] = "value"
    policy: Literal["linear", "mlp", "spline"] = "linear"
    policy_hidden: tuple[int, ...] = (64, 64, 32)
    policy_knots: int = 8
    optimizer: Literal["gd", "adam"] = "gd"
    restarts: int = 1
    batch_size: int | None = None
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    eps_clip: float = 0.01
    output: str | None = None

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.gamma < 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if self.objective not in ("value", "regret"):
            raise ValueError(f"objective must be 'value' or 'regret', got {self.objective!r}")
        if self.policy not in ("linear", "mlp", "spline"):
            raise ValueError(f"unknown policy family {self.policy!r}")
        if self.policy_knots < 2:
            raise ValueError(f"policy_knots must be >= 2, got {self.policy_knots}")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if not 0 < self.eps_clip < 0.5:
            raise ValueError("eps_clip must lie in (0, 0.5)")
