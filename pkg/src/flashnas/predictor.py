"""Three-parameter accuracy predictor driven by NN-Degree.

    theta(g) = 1 / (a + exp(b / g + c))

Fitting profiles out ``(b, c)``: for fixed ``a`` the model is linear in
``(b, c)`` after the transform ``ln(1/theta - a) = b/g + c``. The remaining
one-dimensional search over ``a`` is a log-spaced grid followed by
golden-section refinement, and the result is polished with Levenberg-Marquardt
on the untransformed residuals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_X_y, column_or_1d

from .exceptions import DataError, DomainError, FitError, check_fitted

_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class AccuracyModel:
    a: float
    b: float
    c: float
    n_samples: int = 0
    rmse: float = 0.0

    def to_dict(self) -> dict:
        return {"kind": "accuracy", "a": self.a, "b": self.b, "c": self.c,
                "rmse": self.rmse, "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, data: dict) -> "AccuracyModel":
        if data.get("kind") != "accuracy":
            raise DataError(f"expected an accuracy model, got kind={data.get('kind')!r}")
        try:
            return cls(float(data["a"]), float(data["b"]), float(data["c"]),
                       int(data.get("n_samples", 0)), float(data.get("rmse", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed accuracy model: {exc}") from exc


@dataclass(frozen=True)
class AccuracySample:
    g: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g > 0):
            raise DataError(f"NN-Degree must be positive, got {self.g}")
        if not (math.isfinite(self.theta) and 0 < self.theta < 1):
            raise DataError(f"accuracy must lie in (0, 1), got {self.theta}")


def _theta(a, b, c, g):
    with np.errstate(over="ignore"):  # exp overflow correctly gives theta -> 0
        return 1.0 / (a + np.exp(b / g + c))


def predict_accuracy(model: AccuracyModel, g):
    """Evaluate the predictor at NN-Degree ``g`` (scalar or array)."""
    arr = np.asarray(g, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("NN-Degree must be positive")
    out = _theta(model.a, model.b, model.c, arr)
    return float(out) if out.ndim == 0 else out


def rmse(model: AccuracyModel, samples: Sequence[AccuracySample]) -> float:
    if len(samples) == 0:
        raise DomainError("rmse of an empty sample set")
    g = np.array([s.g for s in samples])
    theta = np.array([s.theta for s in samples])
    return float(np.sqrt(np.mean((predict_accuracy(model, g) - theta) ** 2)))


def _check_samples(g, theta):
    if g.shape[0] < 3:
        raise DomainError(f"need at least 3 samples, got {g.shape[0]}")
    if np.any(~np.isfinite(theta)) or np.any((theta <= 0) | (theta >= 1)):
        raise DataError("accuracy values must lie in (0, 1)")
    if np.any(~np.isfinite(g)) or np.any(g <= 0):
        raise DataError("NN-Degree values must be positive")
    if np.unique(g).size < 2:
        raise FitError("degenerate samples: all NN-Degree values are equal")


class _Profile:
    """Profiled least-squares objective as a function of ``a``."""

    def __init__(self, g, theta):
        self.x = 1.0 / g
        self.theta = theta
        self.y = 1.0 / theta
        self.a_max = float(self.y.min())
        self.design = np.column_stack([self.x, np.ones_like(self.x)])

    def linear_part(self, a):
        z = np.log(self.y - a)
        (b, c), *_ = np.linalg.lstsq(self.design, z, rcond=None)
        return float(b), float(c)

    def loss(self, a):
        b, c = self.linear_part(a)
        pred = _theta(a, b, c, 1.0 / self.x)
        return float(np.sqrt(np.mean((pred - self.theta) ** 2)))

    # a = a_max - a_max * exp(s), s <= 0; s -> -inf approaches the pole at a_max
    def a_of(self, s):
        return self.a_max * (1.0 - math.exp(s))


def _golden(f, lo, hi, tol=1e-12, max_iter=200):
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _fit_params(g, theta, grid_size=400):
    prof = _Profile(g, theta)
    if prof.a_max <= 1.0 + 1e-15 and np.all(theta >= 1):
        raise DataError("accuracy values must lie in (0, 1)")
    s_grid = np.linspace(math.log(1e-13), 0.0, grid_size)
    losses = np.array([prof.loss(prof.a_of(s)) for s in s_grid])
    k = int(np.argmin(losses))
    lo = s_grid[max(k - 1, 0)]
    hi = s_grid[min(k + 1, grid_size - 1)]
    s_best, _ = _golden(lambda s: prof.loss(prof.a_of(s)), lo, hi)
    a = prof.a_of(s_best)
    b, c = prof.linear_part(a)
    best = np.array([a, b, c])
    best_loss = prof.loss(a)

    def resid(p):
        return _theta(p[0], p[1], p[2], g) - theta

    if best_loss > 0:
        try:
            sol = least_squares(resid, best, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=2000)
            cand = sol.x
            cand_loss = float(np.sqrt(np.mean(resid(cand) ** 2)))
            if np.all(np.isfinite(cand)) and cand[0] > 0 and cand_loss < best_loss:
                best, best_loss = cand, cand_loss
        except (ValueError, FloatingPointError):
            pass
    return best, best_loss


def fit_accuracy(samples: Sequence[AccuracySample]) -> AccuracyModel:
    """Least-squares fit of ``(a, b, c)`` to ``(g, theta)`` samples."""
    g = np.array([s.g for s in samples], dtype=float)
    theta = np.array([s.theta for s in samples], dtype=float)
    return AccuracyPredictor().fit(g, theta).model_


class AccuracyPredictor(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``X`` holds NN-Degree values, ``y`` the accuracies.

    Parameters
    ----------
    grid_size : int
        Number of log-spaced starting values scanned for ``a``.
    """

    def __init__(self, grid_size: int = 400):
        self.grid_size = grid_size

    def fit(self, X, y):
        X, y = check_X_y(np.reshape(np.asarray(X, dtype=float), (-1, 1)) if np.ndim(X) == 1 else X,
                         y, ensure_min_samples=1, y_numeric=True)
        if X.shape[1] != 1:
            raise DataError("AccuracyPredictor expects a single NN-Degree column")
        g = X[:, 0]
        theta = np.asarray(y, dtype=float)
        _check_samples(g, theta)
        (a, b, c), loss = _fit_params(g, theta, self.grid_size)
        if b <= 0:
            warnings.warn(f"fitted b={b:.4g} <= 0: accuracy does not increase with NN-Degree "
                          "on these samples", RuntimeWarning, stacklevel=2)
        self.a_, self.b_, self.c_ = float(a), float(b), float(c)
        self.model_ = AccuracyModel(self.a_, self.b_, self.c_, int(g.size), float(loss))
        self.rmse_ = float(loss)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_fitted(self, "model_")
        g = column_or_1d(np.asarray(X, dtype=float).reshape(-1))
        return predict_accuracy(self.model_, g) * np.ones_like(g)

    @classmethod
    def from_model(cls, model: AccuracyModel) -> "AccuracyPredictor":
        est = cls()
        est.a_, est.b_, est.c_ = model.a, model.b, model.c
        est.model_ = model
        est.rmse_ = model.rmse
        est.n_features_in_ = 1
        return est
