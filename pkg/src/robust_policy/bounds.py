"""Sharp CAPO bounds and the value/regret estimators built on them.

Every estimator here has the form ``P_n[sum_a pi(a|X) W(a; Y, A, X)]`` for a
per-row weight matrix ``W`` that does not depend on the policy. The weight
builders are exposed separately because the learner differentiates through
``pi`` with ``W`` held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Union

import numpy as np

from .core import Dataset, NumericalError
from .nuisance import NuisanceSet, NuisanceValues, SensitivitySpec, Side, tail_b
from .policy import Policy

Estimator = Literal["efficient", "plugin", "ipw", "dr"]
ESTIMATORS: tuple[str, ...] = ("efficient", "plugin", "ipw", "dr")
QuantileTerm = Literal["orthogonal", "flipped"]
Nuisances = Union[NuisanceSet, NuisanceValues]


@dataclass(frozen=True, eq=False)
class BoundReport:
    estimate: float
    per_sample: np.ndarray
    se: float
    kind: str
    side: str
    objective: str
    gamma: float

    @property
    def n_eval(self) -> int:
        return len(self.per_sample)

    CSV_HEADER = ("objective", "side", "kind", "gamma", "n_eval", "estimate", "se")

    def csv_row(self) -> list[str]:
        return [self.objective, self.side, self.kind, repr(float(self.gamma)), str(self.n_eval),
                repr(float(self.estimate)), repr(float(self.se))]


def make_report(per_sample: np.ndarray, kind: str, side: str, objective: str, gamma: float) -> BoundReport:
    per_sample = np.asarray(per_sample, dtype=float)
    bad = np.nonzero(~np.isfinite(per_sample))[0]
    if len(bad):
        raise NumericalError(f"non-finite {kind} contribution at row {int(bad[0])}")
    m = len(per_sample)
    se = float(per_sample.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return BoundReport(float(per_sample.mean()), per_sample, se, kind, side, objective, float(gamma))


def _values(nuis: Nuisances, fold: Dataset) -> NuisanceValues:
    return nuis.evaluate(fold.x) if isinstance(nuis, NuisanceSet) else nuis


def _check_finite(arr: np.ndarray, what: str) -> None:
    bad = np.nonzero(~np.isfinite(arr).all(axis=-1) if arr.ndim > 1 else ~np.isfinite(arr))[0]
    if len(bad):
        raise NumericalError(f"non-finite {what} at row {int(bad[0])}")


# ---------------------------------------------------------------------------
# sharp CAPO bounds

def sharp_capo_values(nv: NuisanceValues, spec: SensitivitySpec, side: Side) -> np.ndarray:
    """Q^{+,*} = c^- mu_lo^+ + c^+ mu_hi^+ ; Q^{-,*} = c^+ mu_lo^- + c^- mu_hi^-."""
    c_lo, c_hi = spec.c(nv.e).tails(side)
    return c_lo * nv.lower_trim[side] + c_hi * nv.upper_trim[side]


def sharp_capo(nuis: NuisanceSet, spec: SensitivitySpec, a: int, x, side: Side) -> float:
    nv = nuis.evaluate(np.asarray(x, dtype=float).reshape(1, -1))
    return float(sharp_capo_values(nv, spec, side)[0, a])


# ---------------------------------------------------------------------------
# weight matrices

def plugin_weights(nv: NuisanceValues, spec: SensitivitySpec, side: Side) -> np.ndarray:
    W = sharp_capo_values(nv, spec, side)
    _check_finite(W, "sharp CAPO bound")
    return W


def efficient_weights(nv: NuisanceValues, spec: SensitivitySpec, fold: Dataset, side: Side,
                      quantile_term: QuantileTerm = "orthogonal") -> np.ndarray:
    """One-step bias-corrected weights for the sharp bound on ``side``.

    The quantile-correction term carries the factor (c_hi - c_lo), the sign
    that cancels first-order quantile error. ``quantile_term="flipped"`` uses
    (c_lo - c_hi) instead and is kept for comparison (see README).
    """
    e = nv.e
    c_lo, c_hi = spec.c(e).tails(side)
    b_lo, b_hi = tail_b(spec, side)
    m_lo, m_hi = nv.lower_trim[side], nv.upper_trim[side]
    Q = c_lo * m_lo + c_hi * m_hi
    B = b_lo * m_lo + b_hi * m_hi
    W = Q - e * B

    rows = np.arange(fold.n)
    A, y = fold.a, fold.y
    q = nv.quantile[side][rows, A]
    alpha = spec.level(side)
    below = (y <= q).astype(float)
    above = (y >= q).astype(float)
    factor = (c_hi - c_lo)[rows, A]
    if quantile_term == "flipped":
        factor = -factor
    elif quantile_term != "orthogonal":
        raise ValueError(f"unknown quantile_term {quantile_term!r}")
    corr = (factor * q * (below - alpha)
            + c_lo[rows, A] * (y * below - m_lo[rows, A])
            + c_hi[rows, A] * (y * above - m_hi[rows, A]))
    W[rows, A] += B[rows, A] + corr / e[rows, A]
    _check_finite(W, "efficient-estimator term")
    return W


def ipw_weights(nv: NuisanceValues, fold: Dataset) -> np.ndarray:
    rows = np.arange(fold.n)
    W = np.zeros((fold.n, nv.d_a))
    W[rows, fold.a] = fold.y / nv.e[rows, fold.a]
    _check_finite(W, "IPW term")
    return W


def dr_weights(nv: NuisanceValues, fold: Dataset, capo: np.ndarray | None = None) -> np.ndarray:
    Q = nv.capo if capo is None else capo
    if Q is None:
        raise ValueError("DR estimator needs a conditional-mean (capo) model")
    rows = np.arange(fold.n)
    W = np.array(Q, dtype=float, copy=True)
    W[rows, fold.a] += (fold.y - Q[rows, fold.a]) / nv.e[rows, fold.a]
    _check_finite(W, "DR term")
    return W


def estimator_weights(estimator: Estimator, nv: NuisanceValues, spec: SensitivitySpec,
                      fold: Dataset, side: Side = "upper",
                      quantile_term: QuantileTerm = "orthogonal") -> np.ndarray:
    """Weights for any estimator; ``ipw``/``dr`` ignore ``spec`` and ``side``."""
    if estimator == "efficient":
        return efficient_weights(nv, spec, fold, side, quantile_term)
    if estimator == "plugin":
        return plugin_weights(nv, spec, side)
    if estimator == "ipw":
        return ipw_weights(nv, fold)
    if estimator == "dr":
        return dr_weights(nv, fold)
    raise ValueError(f"unknown estimator {estimator!r}")


def policy_contrib(policy: Policy, X: np.ndarray, W: np.ndarray) -> np.ndarray:
    return (policy.probs(X) * W).sum(axis=1)


# ---------------------------------------------------------------------------
# estimators

def plugin_value_bound(nuis: Nuisances, spec: SensitivitySpec, policy: Policy, fold: Dataset,
                       side: Side) -> BoundReport:
    W = plugin_weights(_values(nuis, fold), spec, side)
    return make_report(policy_contrib(policy, fold.x, W), "plugin", side, "value", spec.gamma)


def efficient_value_bound(nuis: Nuisances, spec: SensitivitySpec, policy: Policy, fold: Dataset,
                          side: Side, quantile_term: QuantileTerm = "orthogonal") -> BoundReport:
    W = efficient_weights(_values(nuis, fold), spec, fold, side, quantile_term)
    return make_report(policy_contrib(policy, fold.x, W), "efficient", side, "value", spec.gamma)


def efficient_value_upper(nuis, spec, policy, fold, quantile_term: QuantileTerm = "orthogonal") -> BoundReport:
    return efficient_value_bound(nuis, spec, policy, fold, "upper", quantile_term)


def efficient_value_lower(nuis, spec, policy, fold, quantile_term: QuantileTerm = "orthogonal") -> BoundReport:
    return efficient_value_bound(nuis, spec, policy, fold, "lower", quantile_term)


def regret_bound(estimator: Estimator, nuis: Nuisances, spec: SensitivitySpec, policy: Policy,
                 baseline: Policy, fold: Dataset, quantile_term: QuantileTerm = "orthogonal") -> BoundReport:
    """Upper bound on V(policy) - V(baseline): upper side for the policy, lower side for the baseline.

    For the point-identified ``ipw``/``dr`` estimators both sides coincide.
    """
    nv = _values(nuis, fold)
    W_up = estimator_weights(estimator, nv, spec, fold, "upper", quantile_term)
    W_lo = estimator_weights(estimator, nv, spec, fold, "lower", quantile_term)
    per = policy_contrib(policy, fold.x, W_up) - policy_contrib(baseline, fold.x, W_lo)
    return make_report(per, estimator, "upper", "regret", spec.gamma)


def efficient_regret_upper(nuis, spec, policy, baseline, fold,
                           quantile_term: QuantileTerm = "orthogonal") -> BoundReport:
    return regret_bound("efficient", nuis, spec, policy, baseline, fold, quantile_term)


def ipw_value(nuis: Nuisances, policy: Policy, fold: Dataset, gamma: float = 1.0) -> BoundReport:
    W = ipw_weights(_values(nuis, fold), fold)
    return make_report(policy_contrib(policy, fold.x, W), "ipw", "point", "value", gamma)


def dr_value(nuis: Nuisances, policy: Policy, fold: Dataset, capo: np.ndarray | None = None,
             gamma: float = 1.0) -> BoundReport:
    """DR estimate; ``capo`` overrides the nuisance set's outcome model (rows of ``fold``)."""
    W = dr_weights(_values(nuis, fold), fold, capo)
    return make_report(policy_contrib(policy, fold.x, W), "dr", "point", "value", gamma)


def value_estimate(estimator: Estimator, nuis: Nuisances, spec: SensitivitySpec, policy: Policy,
                   fold: Dataset, side: Side = "upper",
                   quantile_term: QuantileTerm = "orthogonal") -> BoundReport:
    if estimator == "ipw":
        return ipw_value(nuis, policy, fold, spec.gamma)
    if estimator == "dr":
        return dr_value(nuis, policy, fold, gamma=spec.gamma)
    if estimator == "plugin":
        return plugin_value_bound(nuis, spec, policy, fold, side)
    return efficient_value_bound(nuis, spec, policy, fold, side, quantile_term)


# ---------------------------------------------------------------------------
# generalisation certificate

@dataclass(frozen=True)
class Certificate:
    C_y: float
    C_v: float
    delta: float
    n: int
    R_n: float
    slack: float
    estimate: float
    objective: str

    @property
    def bound(self) -> float:
        """Certified upper bound on V(pi) (value) or on the regret (regret)."""
        return self.estimate + self.slack


def value_constant(C_y: float, gamma: float) -> float:
    return 2.0 * C_y * (1.0 + 1.0 / gamma + gamma)


def certificate_slack(C_y: float, gamma: float, delta: float, n: int, R_n: float | None = None,
                      objective: str = "value") -> float:
    if C_y <= 0:
        raise ValueError(f"outcome bound C_y must be > 0, got {C_y}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if R_n is None:
        R_n = n ** -0.5
    coef = 2.0 if objective == "value" else 4.0
    return coef * value_constant(C_y, gamma) * (R_n + 2.5 * math.sqrt(math.log(2 / delta) / (2 * n)))


def certificate(report: BoundReport, C_y: float, delta: float, n: int | None = None,
                R_n: float | None = None) -> Certificate:
    n = report.n_eval if n is None else n
    R = n ** -0.5 if R_n is None else R_n
    slack = certificate_slack(C_y, report.gamma, delta, n, R, report.objective)
    return Certificate(C_y, value_constant(C_y, report.gamma), delta, n, R, slack,
                       report.estimate, report.objective)


# ---------------------------------------------------------------------------
# sensitivity calibration

class NotExplainedError(ValueError):
    pass


@dataclass
class Calibration:
    gamma: float
    trace: list[tuple[float, float, float]] = field(default_factory=list)

    CSV_HEADER = ("gamma", "lower", "upper", "width")


def partial_interval(nuis: Nuisances, spec: SensitivitySpec, policy: Policy, fold: Dataset,
                     baseline: Policy | None = None, estimator: Estimator = "efficient",
                     quantile_term: QuantileTerm = "orthogonal") -> tuple[float, float]:
    """[lower, upper] for V(policy), or for V(policy) - V(baseline) when a baseline is given."""
    nv = _values(nuis, fold)
    W = {s: estimator_weights(estimator, nv, spec, fold, s, quantile_term) for s in ("upper", "lower")}
    mean = lambda p, s: float(policy_contrib(p, fold.x, W[s]).mean())  # noqa: E731
    if baseline is None:
        return mean(policy, "lower"), mean(policy, "upper")
    return mean(policy, "lower") - mean(baseline, "upper"), mean(policy, "upper") - mean(baseline, "lower")


def calibrate_gamma(nuis_builder: Callable[[float], Nuisances], data: Dataset, policy: Policy,
                    baseline: Policy | None = None, gamma_max: float = 100.0, tol: float = 1e-3,
                    estimator: Estimator = "efficient",
                    quantile_term: QuantileTerm = "orthogonal") -> Calibration:
    """Smallest Gamma whose partially identified interval contains 0.

    Bisection on log Gamma over [0, log gamma_max]; the answer is within a
    factor (1 + tol) of the crossing. ``nuis_builder(gamma)`` must return
    nuisances valid for that Gamma (quantile levels move with Gamma).
    """
    if gamma_max <= 1:
        raise ValueError("gamma_max must exceed 1")
    trace: list[tuple[float, float, float]] = []

    def contains_zero(g: float) -> bool:
        lo, up = partial_interval(nuis_builder(g), SensitivitySpec(g), policy, data, baseline, estimator,
                                  quantile_term)
        trace.append((g, lo, up))
        return lo <= 0.0 <= up

    if contains_zero(1.0):
        return Calibration(1.0, trace)
    if not contains_zero(gamma_max):
        raise NotExplainedError(f"not explained away below gamma_max={gamma_max}")
    lo, hi = 0.0, math.log(gamma_max)
    while hi - lo > math.log1p(tol):
        mid = 0.5 * (lo + hi)
        if contains_zero(math.exp(mid)):
            hi = mid
        else:
            lo = mid
    return Calibration(math.exp(hi), trace)
