"""Policy learning by gradient descent on an estimated value (or regret) bound."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import (BoundReport, Certificate, Estimator, QuantileTerm, certificate, estimator_weights,
                     policy_contrib, regret_bound, value_estimate)
from .core import Dataset, NumericalError, RunConfig, derive_seed, split
from .nets import Adam
from .nuisance import NuisanceSet, NuisanceValues, SensitivitySpec, assemble
from .policy import Policy, SoftmaxPolicy, SplineBasis


@dataclass
class TrainTrace:
    objective: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    wall_time: float = 0.0

    def __len__(self) -> int:
        return len(self.objective)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iter,objective,grad_norm\n")
            for k, (o, g) in enumerate(zip(self.objective, self.grad_norm)):
                fh.write(f"{k},{o!r},{g!r}\n")


@dataclass(frozen=True, eq=False)
class Prepared:
    """Split data plus nuisances evaluated once on the estimator fold."""

    nuisance_fold: Dataset
    eval_fold: Dataset
    nuisances: NuisanceSet
    values: NuisanceValues
    spec: SensitivitySpec


def prepare(config: RunConfig, data: Dataset, nuisances: NuisanceSet | None = None) -> Prepared:
    if data.n < 4:
        raise ValueError("training needs at least 4 samples")
    fold1, fold2 = split(data, config.rho, config.seed)
    spec = SensitivitySpec(config.gamma)
    if nuisances is None:
        nuisances = assemble(fold1, spec, config.learner, config.seed, config.eps_clip)
    return Prepared(fold1, fold2, nuisances, nuisances.evaluate(fold2.x), spec)


def descend(policy: SoftmaxPolicy, X: np.ndarray, W: np.ndarray, lr: float, iterations: int,
            offset: float = 0.0, snapshot_every: int = 0,
            optimizer: str = "gd") -> tuple[SoftmaxPolicy, TrainTrace]:
    """Full-batch descent on ``mean_i sum_a pi(a|x_i) W[i, a] - offset``.

    ``optimizer="gd"`` takes plain steps ``theta -= lr * grad``; ``"adam"``
    feeds the same full-batch gradient to Adam.
    """
    if optimizer not in ("gd", "adam"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    adam = Adam(lr) if optimizer == "adam" else None
    trace = TrainTrace()
    start = time.perf_counter()
    theta = policy.theta.copy()
    for k in range(iterations):
        obj, grad = policy.with_theta(theta).objective_grad(X, W)
        if not np.isfinite(obj) or not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite objective at iteration {k}")
        trace.objective.append(obj - offset)
        trace.grad_norm.append(float(np.linalg.norm(grad)))
        if snapshot_every and k % snapshot_every == 0:
            trace.snapshots[k] = theta.copy()
        theta = adam.step(theta, grad) if adam else theta - lr * grad
    trace.wall_time = time.perf_counter() - start
    return policy.with_theta(theta), trace


def initial_policy(config: RunConfig, d_x: int, d_a: int, restart: int = 0,
                   x: np.ndarray | None = None) -> SoftmaxPolicy:
    """Seeded start; spline policies place their knots over the range of ``x``."""
    seed = config.seed if restart == 0 else derive_seed(config.seed, "restart", restart)
    basis = None
    if config.policy == "spline":
        if x is None:
            raise ValueError("spline policy needs covariates to place its knots")
        basis = SplineBasis.fit(x, config.policy_knots)
    return SoftmaxPolicy.initial(d_x, d_a, seed, config.policy, config.policy_hidden, basis=basis)


def train(config: RunConfig, data: Dataset, objective: str | None = None, estimator: Estimator = "efficient",
          baseline: Policy | None = None, nuisances: NuisanceSet | None = None,
          prepared: Prepared | None = None, quantile_term: QuantileTerm = "orthogonal",
          snapshot_every: int = 0) -> tuple[SoftmaxPolicy, TrainTrace]:
    """Split, fit nuisances, then run ``config.iterations`` gradient steps.

    With ``config.restarts > 1`` descent is repeated from fresh
    initialisations and the run with the lowest final training objective is
    kept, along with its trace.

    In regret mode the baseline is frozen, so the gradient equals the value
    gradient; only the recorded objective is shifted by the baseline's
    lower-bound term.
    """
    objective = objective or config.objective
    prep = prepared or prepare(config, data, nuisances)
    fold = prep.eval_fold
    W = estimator_weights(estimator, prep.values, prep.spec, fold, "upper", quantile_term)
    offset = 0.0
    if objective == "regret":
        if baseline is None:
            raise ValueError("regret objective needs a baseline policy")
        W0 = estimator_weights(estimator, prep.values, prep.spec, fold, "lower", quantile_term)
        offset = float(policy_contrib(baseline, fold.x, W0).mean())
    best = None
    for r in range(config.restarts):
        policy = initial_policy(config, data.d_x, data.d_a, r, fold.x)
        policy, trace = descend(policy, fold.x, W, config.lr, config.iterations, offset, snapshot_every,
                                config.optimizer)
        final = float(policy_contrib(policy, fold.x, W).mean())
        if best is None or final < best[0]:
            best = (final, policy, trace)
    return best[1], best[2]


def evaluate_policy(policy: Policy, estimator: Estimator, nuis: NuisanceSet | NuisanceValues,
                    spec: SensitivitySpec, fold: Dataset, baseline: Policy | None = None,
                    side: str = "upper", quantile_term: QuantileTerm = "orthogonal") -> BoundReport:
    """Value bound of ``policy``, or its regret bound against ``baseline`` when one is given."""
    if baseline is not None:
        return regret_bound(estimator, nuis, spec, policy, baseline, fold, quantile_term)
    return value_estimate(estimator, nuis, spec, policy, fold, side, quantile_term)


@dataclass(frozen=True)
class NoHarmResult:
    certified_improvement: bool
    raw_improvement: bool
    report: BoundReport
    certificate: Certificate


def no_harm_check(policy: Policy, baseline: Policy, data: Dataset, spec: SensitivitySpec,
                  config: RunConfig, C_y: float | None = None, delta: float = 0.05,
                  R_n: float | None = None, nuisances: NuisanceSet | None = None,
                  quantile_term: QuantileTerm = "orthogonal") -> NoHarmResult:
    """Efficient regret upper bound plus its high-probability slack.

    ``C_y`` defaults to max |Y| in the data.
    """
    cfg = RunConfig(**{**config.__dict__, "gamma": spec.gamma})
    prep = prepare(cfg, data, nuisances)
    report = regret_bound("efficient", prep.values, spec, policy, baseline, prep.eval_fold, quantile_term)
    C_y = float(np.max(np.abs(data.y))) if C_y is None else C_y
    cert = certificate(report, C_y, delta, R_n=R_n)
    return NoHarmResult(cert.bound < 0, report.estimate < 0, report, cert)
