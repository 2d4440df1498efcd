"""Per-observation first/second-order terms for the three boosting objectives.

Each loss turns the current ensemble predictions into a :class:`GradHess`
pair that the tree builder consumes. Weights and labels are folded into
``g`` and ``h`` so the tree builder only ever sees plain sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HESSIAN_FLOOR = 1e-16


@dataclass(frozen=True)
class GradHess:
    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if self.g.shape != self.h.shape:
            raise ValueError("g and h must have equal lengths")

    def check(self) -> None:
        bad = ~(np.isfinite(self.g) & np.isfinite(self.h))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise FloatingPointError(f"non-finite gradient/hessian at observation {i}")
        if np.any(self.h < 0):
            i = int(np.flatnonzero(self.h < 0)[0])
            raise FloatingPointError(f"negative hessian at observation {i}")


def _same_len(*arrays):
    n = arrays[0].shape[0]
    if any(a.shape[0] != n for a in arrays):
        raise ValueError("inputs must have equal lengths")


def _tail(x):
    """exp(-2|x|) written as exp(-|x|)**2 so that 2|x| is never formed."""
    e = np.exp(-np.abs(x))
    return e * e


def deviance(x):
    """phi(x) = log(1 + exp(-2x))."""
    x = np.asarray(x, dtype=np.float64)
    return np.log1p(_tail(x)) + np.where(x < 0, -x, 0.0) * 2.0


def deviance_d1(x):
    """phi'(x) = -2 / (1 + exp(2x))."""
    x = np.asarray(x, dtype=np.float64)
    e = _tail(x)
    return np.where(x >= 0, -2.0 * e / (1.0 + e), -2.0 / (1.0 + e))


def deviance_d2(x):
    """phi''(x) = 4 exp(2x) / (1 + exp(2x))^2, symmetric in x."""
    e = _tail(np.asarray(x, dtype=np.float64))
    return 4.0 * e / ((1.0 + e) * (1.0 + e))


def grad_hess_squared(target, pred) -> GradHess:
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _same_len(target, pred)
    return GradHess(-2.0 * (target - pred), np.full(target.shape, 2.0))


def grad_hess_weighted_squared(target, weight, pred) -> GradHess:
    target = np.asarray(target, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _same_len(target, weight, pred)
    if np.any(~(weight > 0)):
        raise ValueError("weighted squared loss needs strictly positive weights")
    return GradHess(-2.0 * weight * (target - pred), 2.0 * weight)


def grad_hess_weighted_deviance(label, weight, pred) -> GradHess:
    """Weighted deviance terms ``(w z phi'(z f), w phi''(z f))``.

    The hessian is floored at ``1e-16 * w`` so saturated leaves keep a
    positive denominator.
    """
    z = np.asarray(label, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _same_len(z, weight, pred)
    m = z * pred
    g = weight * z * deviance_d1(m)
    h = weight * np.maximum(deviance_d2(m), HESSIAN_FLOOR)
    return GradHess(g, h)


class LossSpec:
    """A loss bound to its per-observation targets; maps predictions to GradHess."""

    kind: str = ""

    def grad_hess(self, pred) -> GradHess:
        raise NotImplementedError

    def value(self, pred) -> np.ndarray:
        """Per-observation loss, used by finite-difference checks."""
        raise NotImplementedError

    def subset(self, rows) -> "LossSpec":
        raise NotImplementedError

    def __len__(self) -> int:
        raise NotImplementedError


class SquaredLoss(LossSpec):
    kind = "squared"

    def __init__(self, target):
        self.target = np.asarray(target, dtype=np.float64)

    def grad_hess(self, pred):
        return grad_hess_squared(self.target, pred)

    def value(self, pred):
        return (self.target - pred) ** 2

    def subset(self, rows):
        return SquaredLoss(self.target[rows])

    def __len__(self):
        return self.target.shape[0]


class WeightedSquaredLoss(LossSpec):
    kind = "weighted_squared"

    def __init__(self, target, weight):
        self.target = np.asarray(target, dtype=np.float64)
        self.weight = np.asarray(weight, dtype=np.float64)
        _same_len(self.target, self.weight)
        if np.any(~(self.weight > 0)) or not np.all(np.isfinite(self.weight)):
            raise ValueError("weights must be finite and strictly positive")

    def grad_hess(self, pred):
        return grad_hess_weighted_squared(self.target, self.weight, pred)

    def value(self, pred):
        return self.weight * (self.target - pred) ** 2

    def subset(self, rows):
        return WeightedSquaredLoss(self.target[rows], self.weight[rows])

    def __len__(self):
        return self.target.shape[0]


class WeightedDevianceLoss(LossSpec):
    kind = "weighted_deviance"

    def __init__(self, label, weight):
        self.label = np.asarray(label, dtype=np.float64)
        self.weight = np.asarray(weight, dtype=np.float64)
        _same_len(self.label, self.weight)
        if not np.all((self.label == 1) | (self.label == -1)):
            raise ValueError("deviance labels must be -1 or +1")
        if np.any(~(self.weight >= 0)) or not np.all(np.isfinite(self.weight)):
            raise ValueError("weights must be finite and nonnegative")

    def grad_hess(self, pred):
        return grad_hess_weighted_deviance(self.label, self.weight, pred)

    def value(self, pred):
        return self.weight * deviance(self.label * pred)

    def subset(self, rows):
        return WeightedDevianceLoss(self.label[rows], self.weight[rows])

    def __len__(self):
        return self.label.shape[0]
