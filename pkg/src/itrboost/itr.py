"""Treatment-rule estimators: three boosting methods and two linear baselines.

All rules decide ``sign(score(x))`` with ``sign(0) = +1``.

* indirect boosting: one squared-loss ensemble per arm, score is the difference;
* direct boosting I: weighted squared loss on target ``2 Y A`` with weight ``1/pi``;
* direct boosting II: weighted deviance loss on label ``A sign(Y - mu(X))`` with
  weight ``|Y - mu(X)| / pi``, after estimating the common effect ``mu``;
* Q-learning: per-arm OLS; D-learning: weighted (or lasso) regression of ``2 Y A``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from ._util import sign
from .boosting import BoostedEnsemble, HyperParams, train
from .data import Dataset, arms
from .losses import SquaredLoss, WeightedDevianceLoss, WeightedSquaredLoss

logger = logging.getLogger(__name__)

METHODS = ("indirect-boosting", "direct-boosting-1", "direct-boosting-2",
           "q-linear", "d-linear")
BOOSTING_METHODS = METHODS[:3]

IMBALANCE_FRACTION = 0.10
COND_LIMIT = 1e12


class ItrError(ValueError):
    """An estimator's preconditions do not hold for the given data."""


class SingularSystemError(ItrError, np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    pass


class ItrWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# linear solvers


def weighted_least_squares(X, y, w):
    """Minimize ``sum w (y - b0 - b^T x)^2``; returns ``(b0, b)``.

    Solves the normal equations by Cholesky factorization. Systems with fewer
    rows than unknowns raise :class:`SingularSystemError`; numerically
    singular ones get a ridge of ``1e-10 * trace / p`` and a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, p = X.shape
    if n < p + 1:
        raise SingularSystemError(
            f"singular system: {n} rows for {p + 1} unknowns (condition estimate inf)")
    Z = np.empty((n, p + 1))
    Z[:, 0] = 1.0
    Z[:, 1:] = X
    Zw = Z * w[:, None]
    M = Zw.T @ Z
    b = Zw.T @ y
    cond = np.linalg.cond(M)
    factor = None
    if np.isfinite(cond) and cond < COND_LIMIT:
        try:
            factor = linalg.cho_factor(M, lower=True, check_finite=False)
        except linalg.LinAlgError:
            factor = None
    if factor is None:
        ridge = 1e-10 * np.trace(M) / max(p, 1)
        warnings.warn(f"near-singular normal equations (condition estimate {cond:.3g}); "
                      f"adding ridge {ridge:.3g}", ItrWarning, stacklevel=2)
        try:
            factor = linalg.cho_factor(M + ridge * np.eye(M.shape[0]), lower=True,
                                       check_finite=False)
        except linalg.LinAlgError:
            raise SingularSystemError(
                f"singular system (condition estimate {cond:.3g})") from None
    beta = linalg.cho_solve(factor, b, check_finite=False)
    return float(beta[0]), beta[1:]


@dataclass(frozen=True)
class LassoConfig:
    penalty: float
    tolerance: float = 1e-10
    max_sweeps: int = 100_000

    def __post_init__(self):
        if not self.penalty >= 0:
            raise ValueError("lasso penalty must be >= 0")
        if not self.tolerance > 0:
            raise ValueError("lasso tolerance must be > 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


def _weighted_standardize(X, w):
    W = w.sum()
    mean = (w @ X) / W
    Xc = X - mean
    scale = np.sqrt((w @ (Xc * Xc)) / W)
    return Xc, mean, scale, W


def lasso_lambda_max(X, y, w) -> float:
    """Smallest penalty at which every slope of :func:`weighted_lasso` is zero."""
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Xc, _, _, W = _weighted_standardize(X, w)
    r = y - (w @ y) / W
    return float(2.0 * np.max(np.abs((w * r) @ Xc)))


def weighted_lasso(X, y, w, cfg: LassoConfig):
    """Minimize ``sum w (y - b0 - b^T x)^2 + penalty * ||b||_1``.

    Cyclic coordinate descent with soft-thresholding on weight-standardized
    columns; the per-column threshold is rescaled so the optimum is that of
    the raw-scale objective. Returns ``(b0, b)`` on the original scale.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, p = X.shape
    Xc, mean, scale, W = _weighted_standardize(X, w)
    live = scale > 0
    Xs = np.zeros_like(Xc)
    Xs[:, live] = Xc[:, live] / scale[live]
    ybar = (w @ y) / W
    r = y - ybar
    a = np.zeros(p)
    thresh = np.zeros(p)
    thresh[live] = cfg.penalty / (2.0 * scale[live])
    wX = Xs * w[:, None]

    gap = np.inf
    for _ in range(cfg.max_sweeps):
        gap = 0.0
        for j in np.flatnonzero(live):
            old = a[j]
            rho = wX[:, j] @ r + W * old
            new = np.sign(rho) * max(abs(rho) - thresh[j], 0.0) / W
            if new != old:
                r -= Xs[:, j] * (new - old)
                a[j] = new
                gap = max(gap, abs(new - old))
        if gap < cfg.tolerance:
            break
    else:
        raise ConvergenceError(
            f"lasso did not converge in {cfg.max_sweeps} sweeps (last change {gap:.3g})")
    coef = np.zeros(p)
    coef[live] = a[live] / scale[live]
    return float(ybar - mean @ coef), coef


# ---------------------------------------------------------------------------
# common effect


@dataclass(frozen=True)
class CommonEffectModel:
    """``mu(x) = intercept + slope^T x``; ``slope`` is None for the null model."""

    intercept: float
    slope: Optional[np.ndarray] = None

    @property
    def kind(self) -> str:
        return "null" if self.slope is None else "linear"

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.slope is None:
            return np.full(X.shape[0], self.intercept)
        if X.shape[1] != self.slope.shape[0]:
            raise ValueError(f"expected {self.slope.shape[0]} features, got {X.shape[1]}")
        return self.intercept + X @ self.slope


def estimate_common_effect_linear(data: Dataset) -> CommonEffectModel:
    b0, b = weighted_least_squares(data.covariates, data.outcomes, 1.0 / data.propensities)
    return CommonEffectModel(b0, b)


def estimate_common_effect_lasso(data: Dataset, cfg: LassoConfig) -> CommonEffectModel:
    b0, b = weighted_lasso(data.covariates, data.outcomes, 1.0 / data.propensities, cfg)
    return CommonEffectModel(b0, b)


def estimate_common_effect_null(data: Dataset) -> CommonEffectModel:
    """Inverse-propensity weighted mean of the outcomes."""
    w = 1.0 / data.propensities
    return CommonEffectModel(float((w @ data.outcomes) / w.sum()))


# ---------------------------------------------------------------------------
# policies


class ItrPolicy:
    kind = ""

    def score(self, X) -> np.ndarray:
        raise NotImplementedError

    def decide(self, X):
        """Treatments in {-1, +1} for a row or a matrix of rows."""
        X = np.asarray(X, dtype=np.float64)
        d = sign(self.score(np.atleast_2d(X)))
        return int(d[0]) if X.ndim == 1 else d

    def truncated(self, rounds: int) -> "ItrPolicy":
        return self

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "ItrPolicy":
        kind = d.get("kind")
        if kind == "boosted_indirect":
            return BoostedIndirectPolicy(BoostedEnsemble.from_dict(d["model_plus"]),
                                         BoostedEnsemble.from_dict(d["model_minus"]))
        if kind == "boosted_direct":
            return BoostedDirectPolicy(BoostedEnsemble.from_dict(d["model"]))
        if kind == "linear":
            return LinearPolicy(d["intercept"], np.array(d["coefficients"], dtype=np.float64))
        raise ValueError(f"unknown policy kind {kind!r}")


class BoostedIndirectPolicy(ItrPolicy):
    kind = "boosted_indirect"

    def __init__(self, model_plus: BoostedEnsemble, model_minus: BoostedEnsemble):
        self.model_plus = model_plus
        self.model_minus = model_minus

    def score(self, X):
        return self.model_plus.predict(X) - self.model_minus.predict(X)

    def truncated(self, rounds):
        return BoostedIndirectPolicy(self.model_plus.truncated(rounds),
                                     self.model_minus.truncated(rounds))

    def to_dict(self):
        return {"kind": self.kind, "model_plus": self.model_plus.to_dict(),
                "model_minus": self.model_minus.to_dict()}


class BoostedDirectPolicy(ItrPolicy):
    kind = "boosted_direct"

    def __init__(self, model: BoostedEnsemble):
        self.model = model

    def score(self, X):
        return self.model.predict(X)

    def truncated(self, rounds):
        return BoostedDirectPolicy(self.model.truncated(rounds))

    def to_dict(self):
        return {"kind": self.kind, "model": self.model.to_dict()}


class LinearPolicy(ItrPolicy):
    kind = "linear"

    def __init__(self, intercept: float, coefficients):
        self.intercept = float(intercept)
        self.coefficients = np.asarray(coefficients, dtype=np.float64)

    def score(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.coefficients.shape[0]:
            raise ValueError(f"expected {self.coefficients.shape[0]} features, got {X.shape[1]}")
        return self.intercept + X @ self.coefficients

    def to_dict(self):
        return {"kind": self.kind, "intercept": self.intercept,
                "coefficients": [float(c) for c in self.coefficients]}


# ---------------------------------------------------------------------------
# estimators


def _check_arms(data: Dataset):
    plus, minus = arms(data)
    for name, idx in (("+1", plus), ("-1", minus)):
        if idx.size == 0:
            raise ItrError(f"treatment arm {name} is empty")
    small = min(plus.size, minus.size)
    if small < IMBALANCE_FRACTION * data.n:
        warnings.warn(f"imbalanced arms: smaller arm has {small} of {data.n} rows; "
                      "its quality function is estimated less efficiently",
                      ItrWarning, stacklevel=3)
    return plus, minus


def fit_indirect_boosting(data: Dataset, params: HyperParams) -> BoostedIndirectPolicy:
    plus, minus = _check_arms(data)
    X, Y = data.covariates, data.outcomes
    m_plus = train(X[plus], SquaredLoss(Y[plus]), params)
    m_minus = train(X[minus], SquaredLoss(Y[minus]), params)
    return BoostedIndirectPolicy(m_plus, m_minus)


def dlearning_target(data: Dataset):
    """Target ``2 Y A`` and weight ``1 / pi`` shared by the direct-learning fits."""
    return 2.0 * data.outcomes * data.treatments, 1.0 / data.propensities


def fit_direct_boosting_1(data: Dataset, params: HyperParams) -> BoostedDirectPolicy:
    target, weight = dlearning_target(data)
    return BoostedDirectPolicy(train(data.covariates, WeightedSquaredLoss(target, weight), params))


def owl_labels(data: Dataset, mu: CommonEffectModel):
    """Labels ``A sign(Y - mu)`` and weights ``|Y - mu| / pi``."""
    resid = data.outcomes - mu.evaluate(data.covariates)
    z = data.treatments * sign(resid)
    return z.astype(np.float64), np.abs(resid) / data.propensities


def fit_direct_boosting_2(data: Dataset, params: HyperParams,
                          mu: Optional[CommonEffectModel] = None) -> BoostedDirectPolicy:
    if mu is None:
        mu = estimate_common_effect_linear(data)
    z, w = owl_labels(data, mu)
    if not w.any():
        warnings.warn("all outcome weights are zero; the rule is constant +1",
                      ItrWarning, stacklevel=2)
    return BoostedDirectPolicy(train(data.covariates, WeightedDevianceLoss(z, w), params))


def fit_q_learning_linear(data: Dataset) -> LinearPolicy:
    plus, minus = _check_arms(data)
    X, Y = data.covariates, data.outcomes
    b0p, bp = weighted_least_squares(X[plus], Y[plus], np.ones(plus.size))
    b0m, bm = weighted_least_squares(X[minus], Y[minus], np.ones(minus.size))
    return LinearPolicy(b0p - b0m, bp - bm)


def fit_d_learning_linear(data: Dataset, lasso_penalty: Optional[float] = None) -> LinearPolicy:
    target, weight = dlearning_target(data)
    if lasso_penalty is None:
        b0, b = weighted_least_squares(data.covariates, target, weight)
    else:
        b0, b = weighted_lasso(data.covariates, target, weight, LassoConfig(lasso_penalty))
    return LinearPolicy(b0, b)


def fit_method(method: str, data: Dataset, params: Optional[HyperParams] = None, *,
               lasso_penalty: Optional[float] = None, mu: str = "linear",
               mu_lasso_penalty: Optional[float] = None) -> ItrPolicy:
    """Dispatch by method name (see :data:`METHODS`)."""
    if method in BOOSTING_METHODS and params is None:
        params = HyperParams()
    if method == "indirect-boosting":
        return fit_indirect_boosting(data, params)
    if method == "direct-boosting-1":
        return fit_direct_boosting_1(data, params)
    if method == "direct-boosting-2":
        return fit_direct_boosting_2(data, params, common_effect(data, mu, mu_lasso_penalty))
    if method == "q-linear":
        return fit_q_learning_linear(data)
    if method == "d-linear":
        return fit_d_learning_linear(data, lasso_penalty)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def common_effect(data: Dataset, kind: str = "linear",
                  lasso_penalty: Optional[float] = None) -> CommonEffectModel:
    if kind == "linear":
        return estimate_common_effect_linear(data)
    if kind == "null":
        return estimate_common_effect_null(data)
    if kind == "lasso":
        if lasso_penalty is None:
            raise ValueError("lasso common effect needs a penalty")
        return estimate_common_effect_lasso(data, LassoConfig(lasso_penalty))
    raise ValueError(f"unknown common-effect model {kind!r}")
