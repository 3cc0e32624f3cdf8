"""Softmax policies over score networks, baseline policies and policy files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
from scipy.interpolate import BSpline

from .core import make_rng
from .nets import MLPShape, backward, forward, softmax


class Policy(Protocol):
    d_a: int

    def probs(self, X: np.ndarray) -> np.ndarray:
        """Row-stochastic (n, d_a) matrix of action probabilities."""


def _as_2d(X, d_x: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if d_x > 1 or X.shape[0] == 1 else X.reshape(-1, 1)
    if X.shape[1] != d_x:
        raise ValueError(f"covariate dimension mismatch: expected {d_x}, got {X.shape[1]}")
    return X


@dataclass(frozen=True)
class SplineBasis:
    """Additive cubic B-spline features with uniform knots on ``[lo_j, hi_j]`` per column.

    Covariates outside the range are clipped, so scores extrapolate flat.
    Each column contributes ``n_knots + degree - 1`` features.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n_knots: int = 8
    degree: int = 3

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError("spline basis needs one (lo, hi) pair per covariate")
        if any(not h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError("spline basis needs hi > lo in every column")
        if self.n_knots < 2 or self.degree < 1:
            raise ValueError("spline basis needs n_knots >= 2 and degree >= 1")

    @classmethod
    def fit(cls, X: np.ndarray, n_knots: int = 8, degree: int = 3) -> "SplineBasis":
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        lo, hi = X.min(axis=0), X.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)  # constant column
        return cls(tuple(lo), tuple(hi), n_knots, degree)

    @property
    def d_x(self) -> int:
        return len(self.lo)

    @property
    def n_features(self) -> int:
        return self.d_x * (self.n_knots + self.degree - 1)

    def transform(self, X: np.ndarray) -> np.ndarray:
        k = self.degree
        cols = []
        for j, (lo, hi) in enumerate(zip(self.lo, self.hi)):
            h = (hi - lo) / (self.n_knots - 1)
            t = lo + h * np.arange(-k, self.n_knots + k)
            x = np.clip(X[:, j], t[k], t[-k - 1])
            cols.append(BSpline.design_matrix(x, t, k).toarray())
        return np.hstack(cols)


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    """pi_theta(a|x) = softmax(s_theta(x))_a with s_theta linear or a ReLU MLP.

    With a ``basis`` the network reads spline features of x instead of x.
    """

    shape: MLPShape
    theta: np.ndarray
    basis: SplineBasis | None = None

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (self.shape.n_params,):
            raise ValueError(f"expected {self.shape.n_params} parameters, got {theta.shape}")
        if self.basis is not None and self.basis.n_features != self.shape.d_in:
            raise ValueError(f"basis gives {self.basis.n_features} features, network expects {self.shape.d_in}")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @classmethod
    def linear(cls, d_x: int, d_a: int, theta=None) -> "SoftmaxPolicy":
        shape = MLPShape((d_x, d_a))
        return cls(shape, np.zeros(shape.n_params) if theta is None else theta)

    @classmethod
    def mlp(cls, d_x: int, d_a: int, hidden=(64, 64, 32), theta=None) -> "SoftmaxPolicy":
        shape = MLPShape((d_x, *hidden, d_a))
        return cls(shape, np.zeros(shape.n_params) if theta is None else theta)

    @classmethod
    def initial(cls, d_x: int, d_a: int, seed: int, family: str = "linear",
                hidden=(64, 64, 32), scale: float = 0.01,
                basis: SplineBasis | None = None) -> "SoftmaxPolicy":
        """Seeded initialisation with near-uniform action probabilities.

        The output layer is U(-scale, scale). Hidden layers of an MLP keep the
        fan-in scaled default of :meth:`MLPShape.init`; at U(-0.01, 0.01)
        their gradients vanish. ``family="spline"`` is linear in the features
        of ``basis``.
        """
        rng = make_rng(seed, "policy-init")
        if family == "spline":
            if basis is None or basis.d_x != d_x:
                raise ValueError("spline policy needs a basis over the covariates")
            shape = MLPShape((basis.n_features, d_a))
            return cls(shape, shape.init(rng, scale=scale), basis)
        if family == "linear":
            shape = MLPShape((d_x, d_a))
            return cls(shape, shape.init(rng, scale=scale))
        shape = MLPShape((d_x, *hidden, d_a))
        theta = shape.init(rng)
        n_out = hidden[-1] * d_a + d_a
        theta[-n_out:] = rng.uniform(-scale, scale, n_out)
        return cls(shape, theta)

    @property
    def d_x(self) -> int:
        return self.basis.d_x if self.basis is not None else self.shape.d_in

    @property
    def d_a(self) -> int:
        return self.shape.d_out

    def with_theta(self, theta: np.ndarray) -> "SoftmaxPolicy":
        return SoftmaxPolicy(self.shape, theta, self.basis)

    def _inputs(self, X) -> np.ndarray:
        X = _as_2d(X, self.d_x)
        return X if self.basis is None else self.basis.transform(X)

    def scores(self, X) -> np.ndarray:
        return forward(self.shape, self.theta, self._inputs(X))[0]

    def probs(self, X) -> np.ndarray:
        return softmax(self.scores(X))

    def objective_grad(self, X: np.ndarray, W: np.ndarray) -> tuple[float, np.ndarray]:
        """Value and theta-gradient of ``mean_i sum_a pi(a|x_i) W[i, a]``."""
        X = self._inputs(X)
        s, cache = forward(self.shape, self.theta, X)
        p = softmax(s)
        per_row = (p * W).sum(axis=1)
        # d/ds_b of sum_a p_a W_a = p_b (W_b - sum_a p_a W_a)
        g_s = p * (W - per_row[:, None]) / len(X)
        return float(per_row.mean()), backward(self.shape, self.theta, cache, g_s)

    def jacobian(self, x) -> np.ndarray:
        """d pi(.|x) / d theta as a (d_a, n_params) matrix for a single covariate vector."""
        x = self._inputs(np.asarray(x, dtype=float).reshape(1, -1))
        s, cache = forward(self.shape, self.theta, x)
        p = softmax(s)[0]
        ds = np.diag(p) - np.outer(p, p)  # d pi_a / d s_b
        J_s = np.stack([backward(self.shape, self.theta, cache, np.eye(self.d_a)[b][None, :])
                        for b in range(self.d_a)])
        return ds @ J_s


def policy_probs(policy: Policy, x) -> np.ndarray:
    """Probability vector for a single covariate vector."""
    return policy.probs(np.asarray(x, dtype=float).reshape(1, -1))[0]


def policy_grad(policy: SoftmaxPolicy, x) -> np.ndarray:
    return policy.jacobian(x)


@dataclass(frozen=True)
class UniformPolicy:
    d_a: int

    def probs(self, X) -> np.ndarray:
        X = np.asarray(X)
        n = 1 if X.ndim == 1 else len(X)
        return np.full((n, self.d_a), 1.0 / self.d_a)


@dataclass(frozen=True, eq=False)
class ConstantPolicy:
    """Same probability vector for every x."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("constant policy needs a probability vector")
        object.__setattr__(self, "p", p)

    @property
    def d_a(self) -> int:
        return len(self.p)

    def probs(self, X) -> np.ndarray:
        X = np.asarray(X)
        n = 1 if X.ndim == 1 else len(X)
        return np.tile(self.p, (n, 1))


@dataclass(frozen=True, eq=False)
class FunctionPolicy:
    """Wraps an arbitrary ``X -> (n, d_a)`` map, e.g. a deterministic oracle rule."""

    fn: Callable[[np.ndarray], np.ndarray]
    d_a: int

    def probs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return np.asarray(self.fn(X), dtype=float)


@dataclass(frozen=True, eq=False)
class MixturePolicy:
    """lam * first + (1 - lam) * second."""

    first: Policy
    second: Policy
    lam: float

    @property
    def d_a(self) -> int:
        return self.first.d_a

    def probs(self, X) -> np.ndarray:
        return self.lam * self.first.probs(X) + (1 - self.lam) * self.second.probs(X)


def save_policy(policy: SoftmaxPolicy, path: str | Path) -> None:
    """Text file: first line the layer sizes, then one parameter per line.

    Spline policies put ``spline n_knots degree lo_0 hi_0 ...`` on a line
    before the sizes.
    """
    with Path(path).open("w", encoding="utf-8") as fh:
        b = policy.basis
        if b is not None:
            bounds = [repr(v) for pair in zip(b.lo, b.hi) for v in pair]
            fh.write(" ".join(["spline", str(b.n_knots), str(b.degree), *bounds]) + "\n")
        fh.write(" ".join(str(s) for s in policy.shape.sizes) + "\n")
        for v in policy.theta:
            fh.write(repr(float(v)) + "\n")


def load_policy(path: str | Path) -> SoftmaxPolicy:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    basis = None
    if lines[0].startswith("spline"):
        head = lines.pop(0).split()
        bounds = [float(v) for v in head[3:]]
        basis = SplineBasis(tuple(bounds[0::2]), tuple(bounds[1::2]), int(head[1]), int(head[2]))
    sizes = tuple(int(s) for s in lines[0].split())
    theta = np.array([float(v) for v in lines[1:] if v.strip()])
    return SoftmaxPolicy(MLPShape(sizes), theta, basis)
