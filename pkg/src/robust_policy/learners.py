"""Regression, classification and quantile learners used for nuisance fits.

Basis families (``linear``, ``spline``) are fitted exactly: multinomial
logistic regression, least squares and the pinball-loss linear program.
The ``mlp`` family trains a ReLU network by mini-batch Adam with early
stopping on a held-out slice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LinearRegression, LogisticRegression, QuantileRegressor
from sklearn.preprocessing import SplineTransformer

from .core import LearnerConfig, make_rng
from .nets import Adam, MLPShape, backward, forward, log_softmax, softmax

Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass
class FitInfo:
    loss: float
    epochs: int = 0
    notes: list[str] = field(default_factory=list)


def pinball_loss(y: np.ndarray, q: np.ndarray, level: float) -> float:
    r = y - q
    return float(np.mean(np.maximum(level * r, (level - 1) * r)))


class Features:
    """Covariate map for basis learners; fitted on training covariates only."""

    def __init__(self, cfg: LearnerConfig, X: np.ndarray):
        self.family = cfg.family
        if self.family == "spline":
            self.spline = SplineTransformer(
                n_knots=cfg.n_knots, degree=cfg.degree, include_bias=False, extrapolation="linear"
            ).fit(X)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        if self.family == "spline":
            return self.spline.transform(X)
        return X


class _Standardizer:
    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd = np.where(sd > 0, sd, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.sd


# ---------------------------------------------------------------------------
# mlp family

def _train_mlp(X, target, d_out, loss_grad, cfg: LearnerConfig, seed: int, label: str):
    """Mini-batch Adam with early stopping; returns (shape, theta, FitInfo).

    ``loss_grad(out, target) -> (mean loss, d loss / d out)`` for one batch.
    """
    rng = make_rng(seed, "mlp", label)
    shape = MLPShape((X.shape[1], *cfg.hidden, d_out))
    theta = shape.init(rng)
    n = len(X)
    perm = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n)) if n >= 20 else 0
    val, tr = perm[:n_val], perm[n_val:]
    opt = Adam(cfg.lr)
    best, best_loss, stall, epoch = theta, np.inf, 0, 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(tr)
        for k in range(0, len(order), cfg.batch_size):
            b = order[k:k + cfg.batch_size]
            out, cache = forward(shape, theta, X[b])
            _, g = loss_grad(out, target[b])
            grad = backward(shape, theta, cache, g) + cfg.l2 * theta
            theta = opt.step(theta, grad)
        check = val if n_val else tr
        cur = loss_grad(forward(shape, theta, X[check])[0], target[check])[0]
        if cur < best_loss - 1e-12:
            best, best_loss, stall = theta, cur, 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    return shape, best, FitInfo(loss=float(best_loss), epochs=epoch)


def _ce_grad(out, labels):
    ls = log_softmax(out)
    n = len(out)
    loss = -ls[np.arange(n), labels].mean()
    g = softmax(out)
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


def _mse_grad(out, y):
    r = out[:, 0] - y
    return float(np.mean(r**2)), (2 * r / len(r))[:, None]


def _pinball_grad(level):
    def lg(out, y):
        r = y - out[:, 0]
        loss = np.mean(np.maximum(level * r, (level - 1) * r))
        # subgradient of the check loss in q
        g = np.where(r > 0, -level, 1 - level) / len(r)
        return float(loss), g[:, None]
    return lg


# ---------------------------------------------------------------------------
# public fitters

def fit_classifier(X: np.ndarray, labels: np.ndarray, d_a: int, cfg: LearnerConfig,
                   seed: int) -> tuple[Predictor, FitInfo]:
    """Multinomial model x -> (n, d_a) class probabilities minimising cross-entropy."""
    if cfg.family == "mlp":
        std = _Standardizer(X)
        shape, theta, info = _train_mlp(std(X), labels, d_a, _ce_grad, cfg, seed, "classifier")
        return (lambda Z: softmax(forward(shape, theta, std(Z))[0])), info
    feats = Features(cfg, X)
    clf = LogisticRegression(C=1e6, max_iter=5000, tol=1e-10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        clf.fit(feats(X), labels)
    cols = np.searchsorted(clf.classes_, np.arange(d_a))

    def predict(Z):
        return clf.predict_proba(feats(Z))[:, cols]

    p = predict(X)
    loss = -np.mean(np.log(np.clip(p[np.arange(len(X)), labels], 1e-300, None)))
    return predict, FitInfo(loss=float(loss), epochs=int(np.max(clf.n_iter_)))


def fit_regression(X: np.ndarray, y: np.ndarray, cfg: LearnerConfig, seed: int,
                   label: str = "regression") -> tuple[Predictor, FitInfo]:
    """Least-squares conditional mean."""
    if cfg.family == "mlp":
        std = _Standardizer(X)
        mu, sd = y.mean(), y.std() or 1.0
        shape, theta, info = _train_mlp(std(X), (y - mu) / sd, 1, _mse_grad, cfg, seed, label)
        info.loss *= sd**2
        return (lambda Z: forward(shape, theta, std(Z))[0][:, 0] * sd + mu), info
    feats = Features(cfg, X)
    reg = LinearRegression().fit(feats(X), y)

    def predict(Z):
        return reg.predict(feats(Z))

    return predict, FitInfo(loss=float(np.mean((predict(X) - y) ** 2)))


def fit_quantile_regression(X: np.ndarray, y: np.ndarray, level: float, cfg: LearnerConfig,
                            seed: int, label: str = "quantile") -> tuple[Predictor, FitInfo]:
    """Conditional ``level``-quantile by minimising the pinball loss."""
    if not 0 < level < 1:
        raise ValueError(f"quantile level must lie in (0, 1), got {level}")
    if np.ptp(y) == 0:
        c = float(y[0])
        return (lambda Z: np.full(len(Z), c)), FitInfo(loss=0.0, notes=["constant outcome"])
    if cfg.family == "mlp":
        std = _Standardizer(X)
        mu, sd = y.mean(), y.std()
        shape, theta, info = _train_mlp(std(X), (y - mu) / sd, 1, _pinball_grad(level), cfg, seed,
                                        f"{label}-{level!r}")
        info.loss *= sd
        return (lambda Z: forward(shape, theta, std(Z))[0][:, 0] * sd + mu), info
    feats = Features(cfg, X)
    qr = QuantileRegressor(quantile=level, alpha=0.0, solver="highs").fit(feats(X), y)

    def predict(Z):
        return qr.predict(feats(Z))

    return predict, FitInfo(loss=pinball_loss(y, predict(X), level))
