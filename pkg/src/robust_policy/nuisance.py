"""Sensitivity constants and the nuisance set: propensity, conditional
quantiles at the two sensitivity levels, and the lower/upper trimmed means.

Sides are named ``"upper"`` and ``"lower"``; the upper side uses quantile
level ``alpha_plus = gamma / (1 + gamma)``, the lower side
``alpha_minus = 1 / (1 + gamma)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .core import Dataset, LearnerConfig, derive_seed
from .learners import FitInfo, fit_classifier, fit_quantile_regression, fit_regression

Side = Literal["upper", "lower"]
SIDES: tuple[Side, Side] = ("upper", "lower")
ArmFn = Callable[[np.ndarray], np.ndarray]  # X (n, d_x) -> (n, d_a)


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class SensitivitySpec:
    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")

    @property
    def alpha_plus(self) -> float:
        return self.gamma / (1 + self.gamma)

    @property
    def alpha_minus(self) -> float:
        return 1 / (1 + self.gamma)

    @property
    def b_plus(self) -> float:
        return 1 - self.gamma

    @property
    def b_minus(self) -> float:
        return 1 - 1 / self.gamma

    def level(self, side: Side) -> float:
        return self.alpha_plus if side == "upper" else self.alpha_minus

    def c(self, e) -> "CCoefficients":
        return c_coefficients(self, e)


@dataclass(frozen=True)
class CCoefficients:
    """c_plus = b_plus * e + gamma, c_minus = b_minus * e + 1 / gamma."""

    c_plus: np.ndarray
    c_minus: np.ndarray

    def tails(self, side: Side) -> tuple[np.ndarray, np.ndarray]:
        """(coefficient on the lower-tail mean, coefficient on the upper-tail mean)."""
        if side == "upper":
            return self.c_minus, self.c_plus
        return self.c_plus, self.c_minus


def c_coefficients(spec: SensitivitySpec, e) -> CCoefficients:
    e = np.asarray(e, dtype=float)
    return CCoefficients(spec.b_plus * e + spec.gamma, spec.b_minus * e + 1 / spec.gamma)


def tail_b(spec: SensitivitySpec, side: Side) -> tuple[float, float]:
    """(b on the lower-tail mean, b on the upper-tail mean) in the correction terms."""
    if side == "upper":
        return spec.b_minus, spec.b_plus
    return spec.b_plus, spec.b_minus


# ---------------------------------------------------------------------------
# nuisance containers

@dataclass(frozen=True)
class NuisanceValues:
    """Nuisances evaluated at a fixed set of rows, each (n, d_a)."""

    e: np.ndarray
    quantile: dict[str, np.ndarray]
    lower_trim: dict[str, np.ndarray]
    upper_trim: dict[str, np.ndarray]
    capo: np.ndarray | None = None

    @property
    def d_a(self) -> int:
        return self.e.shape[1]

    def mean_outcome(self, side: Side = "upper") -> np.ndarray:
        return self.lower_trim[side] + self.upper_trim[side]


@dataclass
class FitReport:
    entries: dict[str, object] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def add(self, key: str, info: FitInfo) -> None:
        self.entries[f"{key}.loss"] = info.loss
        if info.epochs:
            self.entries[f"{key}.epochs"] = info.epochs
        for note in info.notes:
            self.warnings.append(f"{key}: {note}")

    def to_text(self) -> str:
        lines = [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in self.entries.items()]
        lines += [f"warning.{i}={w}" for i, w in enumerate(self.warnings)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class NuisanceSet:
    """Vectorised nuisance functions, each mapping X (n, d_x) to an (n, d_a) array.

    ``quantile``, ``lower_trim`` and ``upper_trim`` are keyed by side.
    """

    spec: SensitivitySpec
    propensity: ArmFn
    quantile: dict[str, ArmFn]
    lower_trim: dict[str, ArmFn]
    upper_trim: dict[str, ArmFn]
    capo: ArmFn | None = None
    provenance: Literal["fitted", "oracle"] = "fitted"
    report: FitReport = field(default_factory=FitReport)

    def evaluate(self, X) -> NuisanceValues:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return NuisanceValues(
            e=self.propensity(X),
            quantile={s: self.quantile[s](X) for s in SIDES},
            lower_trim={s: self.lower_trim[s](X) for s in SIDES},
            upper_trim={s: self.upper_trim[s](X) for s in SIDES},
            capo=None if self.capo is None else self.capo(X),
        )


def clip_probs(p: np.ndarray, eps: float) -> np.ndarray:
    """Shrink each row toward uniform just enough that every entry is >= eps.

    Rows stay normalised and entries stay <= 1 - (d_a - 1) * eps; for two arms
    this is exactly clipping to [eps, 1 - eps].
    """
    p = np.asarray(p, dtype=float)
    d_a = p.shape[1]
    lo = p.min(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):  # uniform rows are left alone below
        t = np.clip((eps - lo) / (1.0 / d_a - lo), 0.0, 1.0)
    t = np.where(lo >= eps, 0.0, t)
    out = (1 - t) * p + t / d_a
    return out / out.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# fitting

def _check_arms(fold: Dataset, minimum: int = 1) -> None:
    counts = np.bincount(fold.a, minlength=fold.d_a)
    for a, c in enumerate(counts):
        if c < minimum:
            raise FitError(f"arm {a} has no samples in the nuisance fold")


def fit_propensity(fold: Dataset, learner: LearnerConfig, seed: int = 0,
                   eps_clip: float = 0.01) -> tuple[ArmFn, FitInfo]:
    _check_arms(fold)
    raw, info = fit_classifier(fold.x, fold.a, fold.d_a, learner, derive_seed(seed, "propensity"))
    return (lambda X: clip_probs(raw(X), eps_clip)), info


def _stack_arms(fns: list[Callable[[np.ndarray], np.ndarray]]) -> ArmFn:
    return lambda X: np.column_stack([f(X) for f in fns])


def fit_quantile(fold: Dataset, level: float, learner: LearnerConfig, seed: int = 0,
                 report: FitReport | None = None) -> ArmFn:
    """Per-arm conditional quantile x -> F^{-1}_{x,a}(level) from the pinball loss."""
    _check_arms(fold)
    fns = []
    for a in range(fold.d_a):
        sub = fold.arm(a)
        if report is not None and sub.n < 10:
            report.warnings.append(f"quantile[{level!r}] arm {a}: only {sub.n} samples")
        fn, info = fit_quantile_regression(sub.x, sub.y, level, learner,
                                           derive_seed(seed, "quantile", a, repr(level)))
        if report is not None:
            report.add(f"quantile[{level!r}].arm{a}", info)
        fns.append(fn)
    return _stack_arms(fns)


def fit_trimmed_means(fold: Dataset, quantile_fn: ArmFn, learner: LearnerConfig, seed: int = 0,
                      report: FitReport | None = None, tag: str = "") -> tuple[ArmFn, ArmFn]:
    """Regress y*1{y <= q(x,a)} and y*1{y >= q(x,a)} on x within each arm.

    Rows with y exactly at the fitted quantile count in both tails.
    """
    _check_arms(fold)
    q = quantile_fn(fold.x)[np.arange(fold.n), fold.a]
    lo_fns, hi_fns = [], []
    for a in range(fold.d_a):
        mask = fold.a == a
        X, y, qa = fold.x[mask], fold.y[mask], q[mask]
        lo, info_lo = fit_regression(X, y * (y <= qa), learner, derive_seed(seed, "trim-lo", tag, a))
        hi, info_hi = fit_regression(X, y * (y >= qa), learner, derive_seed(seed, "trim-hi", tag, a))
        if report is not None:
            report.add(f"trim_lo[{tag}].arm{a}", info_lo)
            report.add(f"trim_hi[{tag}].arm{a}", info_hi)
        lo_fns.append(lo)
        hi_fns.append(hi)
    return _stack_arms(lo_fns), _stack_arms(hi_fns)


def fit_capo(fold: Dataset, learner: LearnerConfig, seed: int = 0,
             report: FitReport | None = None) -> ArmFn:
    """Per-arm conditional mean E[Y | x, a] (the outcome model of the DR baseline)."""
    _check_arms(fold)
    fns = []
    for a in range(fold.d_a):
        sub = fold.arm(a)
        fn, info = fit_regression(sub.x, sub.y, learner, derive_seed(seed, "capo", a))
        if report is not None:
            report.add(f"capo.arm{a}", info)
        fns.append(fn)
    return _stack_arms(fns)


def assemble(fold: Dataset, spec: SensitivitySpec, learner: LearnerConfig | None = None,
             seed: int = 0, eps_clip: float = 0.01, propensity: ArmFn | None = None,
             capo: ArmFn | None | bool = True) -> NuisanceSet:
    """Fit every nuisance on ``fold``.

    A pre-fitted ``propensity`` (or ``capo``) is reused as-is, which is how
    Gamma sweeps avoid refitting the parts that do not depend on Gamma.
    ``capo=False`` skips the outcome model.
    """
    learner = learner or LearnerConfig()
    report = FitReport()
    report.entries["gamma"] = float(spec.gamma)
    report.entries["n"] = fold.n
    report.entries["family"] = learner.family
    if propensity is None:
        try:
            propensity, info = fit_propensity(fold, learner, seed, eps_clip)
        except FitError as exc:
            raise FitError(f"propensity fit failed: {exc}") from exc
        report.add("propensity", info)

    quantile, lower, upper = {}, {}, {}
    levels = {s: spec.level(s) for s in SIDES}
    try:
        if levels["upper"] == levels["lower"]:
            qfn = fit_quantile(fold, levels["upper"], learner, seed, report)
            lo, hi = fit_trimmed_means(fold, qfn, learner, seed, report, tag="both")
            for s in SIDES:
                quantile[s], lower[s], upper[s] = qfn, lo, hi
        else:
            for s in SIDES:
                quantile[s] = fit_quantile(fold, levels[s], learner, seed, report)
                lower[s], upper[s] = fit_trimmed_means(fold, quantile[s], learner, seed, report, tag=s)
            crossed = quantile["upper"](fold.x) < quantile["lower"](fold.x)
            report.entries["quantile_crossings"] = int(crossed.sum())
    except FitError as exc:
        raise FitError(f"outcome nuisance fit failed: {exc}") from exc

    if capo is True:
        capo = fit_capo(fold, learner, seed, report)
    elif capo is False:
        capo = None
    return NuisanceSet(spec, propensity, quantile, lower, upper, capo=capo,
                       provenance="fitted", report=report)


def oracle_nuisances(instance, spec: SensitivitySpec) -> NuisanceSet:
    """Exact nuisances for a :class:`DiscreteInstance` or a :class:`SyntheticSpec`."""
    from . import dgp, oracle

    if isinstance(instance, oracle.DiscreteInstance):
        return oracle.discrete_nuisances(instance, spec)
    if isinstance(instance, dgp.SyntheticSpec):
        return dgp.oracle_nuisances(instance, spec)
    raise TypeError(f"no oracle nuisances for {type(instance).__name__}")
