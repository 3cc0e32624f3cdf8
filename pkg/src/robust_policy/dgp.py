"""Synthetic confounded benchmark with closed-form ground truth.

X ~ U[-2, 2], U ~ Ber(1/2), eps ~ N(0, 1) and

    Y[a] = (2a-1) X + (2a-1) - 2 sin(2 (2a-1) X) - 2 (2U-1)(1 + X/2) + eps

Treatment follows the confounded propensity
e(1,x,u) = u / r(x; 1/G) + (1-u) / r(x; G), r(x; g) = 1 + (1/s(x) - 1) g,
s(x) = sigmoid(0.75 x + 0.5), which sits exactly on the MSM boundary at G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .core import Dataset, make_rng
from .nuisance import NuisanceSet, SensitivitySpec
from .policy import FunctionPolicy, Policy, UniformPolicy

X_LOW, X_HIGH = -2.0, 2.0

# (1/4) * integral over [-2, 2] of -|x + 1 - 2 sin 2x|: value of the Bayes policy.
# Quadrature between the roots of the arm-1 mean; see tests/test_dgp.py.
BAYES_VALUE = -1.4079820219611272


@dataclass(frozen=True)
class SyntheticSpec:
    gamma_star: float
    n: int = 8000
    seed: int = 0

    def __post_init__(self):
        if not self.gamma_star >= 1:
            raise ValueError(f"gamma_star must be >= 1, got {self.gamma_star}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class HiddenTrace:
    u: np.ndarray
    y0: np.ndarray
    y1: np.ndarray


def labelled_propensity(x):
    """sigmoid(0.75 x + 0.5)."""
    return expit(0.75 * np.asarray(x, dtype=float) + 0.5)


def _r(x, g):
    return 1 + (1 / labelled_propensity(x) - 1) * g


def true_propensity(x, u, gamma_star: float):
    """P(A = 1 | X = x, U = u)."""
    u = np.asarray(u, dtype=float)
    return u / _r(x, 1 / gamma_star) + (1 - u) / _r(x, gamma_star)


def marginal_propensity(x, gamma_star: float):
    """P(A = 1 | X = x) implied by the data, E_U[e(1, x, U)]."""
    return 0.5 * (true_propensity(x, 1, gamma_star) + true_propensity(x, 0, gamma_star))


def arm_mean(a: int, x):
    """E[Y[a] | X = x]; U and eps average out."""
    s = 2 * a - 1
    x = np.asarray(x, dtype=float)
    return s * x + s - 2 * np.sin(2 * s * x)


def generate(spec: SyntheticSpec) -> tuple[Dataset, HiddenTrace]:
    rng = make_rng(spec.seed, "dgp", repr(float(spec.gamma_star)), spec.n)
    n = spec.n
    x = rng.uniform(X_LOW, X_HIGH, n)
    u = rng.binomial(1, 0.5, n)
    eps = rng.standard_normal(n)
    shift = -2 * (2 * u - 1) * (1 + 0.5 * x) + eps
    y0 = arm_mean(0, x) + shift
    y1 = arm_mean(1, x) + shift
    a = (rng.uniform(size=n) < true_propensity(x, u, spec.gamma_star)).astype(np.int64)
    y = np.where(a == 1, y1, y0)
    return Dataset(y, a, x.reshape(-1, 1), d_a=2), HiddenTrace(u, y0, y1)


# ---------------------------------------------------------------------------
# ground-truth evaluation

def _simpson(f_vals: np.ndarray, h: float) -> float:
    w = np.ones(len(f_vals))
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return float(h / 3 * (w @ f_vals))


def true_value(policy: Policy, quadrature_points: int = 2049) -> float:
    """V(pi) = (1/4) int_{-2}^{2} sum_a pi(a|x) m_a(x) dx by composite Simpson."""
    if quadrature_points < 16:
        raise ValueError("need at least 16 quadrature points")
    n = quadrature_points + (quadrature_points % 2 == 0)  # odd node count
    xs = np.linspace(X_LOW, X_HIGH, n)
    p = policy.probs(xs.reshape(-1, 1))
    f = p[:, 0] * arm_mean(0, xs) + p[:, 1] * arm_mean(1, xs)
    return _simpson(f, (X_HIGH - X_LOW) / (n - 1)) / (X_HIGH - X_LOW)


def true_regret(policy: Policy, baseline: Policy | None = None, quadrature_points: int = 2049) -> float:
    baseline = baseline or UniformPolicy(2)
    return true_value(policy, quadrature_points) - true_value(baseline, quadrature_points)


def bayes_policy() -> FunctionPolicy:
    """Deterministic argmin_a m_a(x)."""
    def fn(X):
        p1 = (arm_mean(1, X[:, 0]) < arm_mean(0, X[:, 0])).astype(float)
        return np.column_stack([1 - p1, p1])
    return FunctionPolicy(fn, 2)


# ---------------------------------------------------------------------------
# exact observational law and oracle nuisances

def outcome_mixture(x, a: int, gamma_star: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Y | X=x, A=a is sum_u w_u N(mean_u, 1). Returns (w, means, P(A=a|x)), each with a trailing u axis."""
    x = np.asarray(x, dtype=float)
    w, means = [], []
    for u in (0, 1):
        e1 = true_propensity(x, u, gamma_star)
        w.append(0.5 * (e1 if a == 1 else 1 - e1))
        means.append(arm_mean(a, x) - 2 * (2 * u - 1) * (1 + 0.5 * x))
    w = np.stack(w, axis=-1)
    pa = w.sum(axis=-1)
    return w / pa[..., None], np.stack(means, axis=-1), pa


def mixture_quantile(w: np.ndarray, means: np.ndarray, level: float, iters: int = 200) -> np.ndarray:
    lo = means.min(axis=-1) - 15.0
    hi = means.max(axis=-1) + 15.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = (w * norm.cdf(mid[..., None] - means)).sum(axis=-1) < level
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < 1e-13):
            break
    return 0.5 * (lo + hi)


def mixture_partial_means(w, means, q) -> tuple[np.ndarray, np.ndarray]:
    """(E[Y 1{Y <= q}], E[Y 1{Y >= q}]) for the Gaussian mixture."""
    z = q[..., None] - means
    lower = (w * (means * norm.cdf(z) - norm.pdf(z))).sum(axis=-1)
    upper = (w * (means * norm.sf(z) + norm.pdf(z))).sum(axis=-1)
    return lower, upper


def oracle_nuisances(spec: SyntheticSpec, sens: SensitivitySpec) -> NuisanceSet:
    g = spec.gamma_star

    def propensity(X):
        p1 = marginal_propensity(X[:, 0], g)
        return np.column_stack([1 - p1, p1])

    def per_arm(fn):
        return lambda X: np.column_stack([fn(X[:, 0], a) for a in (0, 1)])

    def quantile_for(level):
        def q(x, a):
            w, m, _ = outcome_mixture(x, a, g)
            return mixture_quantile(w, m, level)
        return per_arm(q)

    def trims_for(level, which):
        def t(x, a):
            w, m, _ = outcome_mixture(x, a, g)
            return mixture_partial_means(w, m, mixture_quantile(w, m, level))[which]
        return per_arm(t)

    def capo(x, a):
        w, m, _ = outcome_mixture(x, a, g)
        return (w * m).sum(axis=-1)

    sides = ("upper", "lower")
    return NuisanceSet(
        sens,
        propensity,
        {s: quantile_for(sens.level(s)) for s in sides},
        {s: trims_for(sens.level(s), 0) for s in sides},
        {s: trims_for(sens.level(s), 1) for s in sides},
        capo=per_arm(capo),
        provenance="oracle",
    )
