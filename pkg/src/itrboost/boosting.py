"""Second-order gradient tree boosting with exact greedy split finding.

Each round fits a regression tree to the per-observation first/second-order
terms ``(g, h)`` of the loss at the current predictions. Leaf weights and
split gains use the usual penalized closed forms

    w = -G / (H + lam)
    gain = 1/2 [G_l^2/(H_l+lam) + G_r^2/(H_r+lam) - G^2/(H+lam)] - gamma

and each tree enters the ensemble scaled by the shrinkage ``eta``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from . import _kernels
from .losses import GradHess, LossSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperParams:
    """Boosting controls: rounds K, shrinkage eta, depth d, penalties gamma and lambda."""

    rounds: int = 100
    shrinkage: float = 0.1
    max_depth: int = 3
    leaf_penalty: float = 0.0
    weight_penalty: float = 1.0
    min_child_hessian: float = 0.0

    def __post_init__(self):
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError(f"rounds must be an integer >= 1, got {self.rounds}")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ValueError(f"shrinkage must lie in (0, 1], got {self.shrinkage}")
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ValueError(f"max_depth must be an integer >= 1, got {self.max_depth}")
        for name in ("leaf_penalty", "weight_penalty", "min_child_hessian"):
            v = getattr(self, name)
            if not (v >= 0.0 and np.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    def replace(self, **changes) -> "HyperParams":
        d = asdict(self)
        d.update(changes)
        return HyperParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_leaf_weight(G: float, H: float, lam: float) -> float:
    """Optimal leaf output ``-G / (H + lam)``."""
    denom = H + lam
    if denom == 0.0:
        raise ZeroDivisionError("leaf weight undefined: H + lambda == 0")
    return -G / denom


def split_gain(G_l: float, H_l: float, G_r: float, H_r: float,
               lam: float, gamma: float) -> float:
    """Penalized objective reduction from splitting a node into two children."""
    dl, dr, dp = H_l + lam, H_r + lam, H_l + H_r + lam
    if dl == 0.0 or dr == 0.0 or dp == 0.0:
        raise ZeroDivisionError("split gain undefined: zero denominator")
    G = G_l + G_r
    return 0.5 * (G_l * G_l / dl + G_r * G_r / dr - G * G / dp) - gamma


class Split(NamedTuple):
    feature: int
    threshold: float
    gain: float


def _presort(Xl: np.ndarray) -> np.ndarray:
    """p x m array; row f lists local row indices in ascending order of feature f."""
    return np.ascontiguousarray(np.argsort(Xl, axis=0, kind="stable").T.astype(np.int64))


def find_best_split(rows, grad_hess: GradHess, X: np.ndarray,
                    params: HyperParams) -> Optional[Split]:
    """Exact greedy search over every feature and every midpoint threshold.

    ``X`` is the full covariate matrix; ``rows`` selects the node's instances
    and indexes ``grad_hess`` in the same coordinates. Returns ``None`` when no
    candidate has strictly positive gain with both children meeting
    ``min_child_hessian``. Ties go to the lowest feature, then the smallest
    threshold.
    """
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        raise ValueError("find_best_split needs a nonempty row set")
    Xl = np.ascontiguousarray(np.asarray(X, dtype=np.float64)[rows])
    g = np.ascontiguousarray(grad_hess.g[rows], dtype=np.float64)
    h = np.ascontiguousarray(grad_hess.h[rows], dtype=np.float64)
    f, thr, gain, _, _ = _kernels.best_split(
        Xl, g, h, _presort(Xl), 0, rows.size, float(params.weight_penalty),
        float(params.leaf_penalty), float(params.min_child_hessian))
    if f < 0:
        return None
    return Split(int(f), float(thr), float(gain))


class RegressionTree:
    """Binary regression tree stored as parallel node arrays.

    Internal nodes have ``feature >= 0``; rows with ``x[feature] < threshold``
    go left. Leaves have ``feature == -1`` and carry ``weight``.
    """

    def __init__(self, feature, threshold, left, right, weight):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.weight = np.asarray(weight, dtype=np.float64)

    @classmethod
    def leaf(cls, weight: float) -> "RegressionTree":
        return cls([-1], [0.0], [-1], [-1], [weight])

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node index reached by each row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            idx = rows[internal]
            ni = node[internal]
            go_left = X[idx, f[internal]] < self.threshold[ni]
            node[internal] = np.where(go_left, self.left[ni], self.right[ni])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.weight[self.apply(X)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"weight": float(self.weight[i])})
            else:
                nodes.append({"feature": int(self.feature[i]),
                              "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i])})
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        f, t, l, r, w = [], [], [], [], []
        for node in d["nodes"]:
            if "weight" in node:
                f.append(-1); t.append(0.0); l.append(-1); r.append(-1)
                w.append(float(node["weight"]))
            else:
                f.append(int(node["feature"])); t.append(float(node["threshold"]))
                l.append(int(node["left"])); r.append(int(node["right"]))
                w.append(0.0)
        return cls(f, t, l, r, w)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegressionTree):
            return NotImplemented
        return all(np.array_equal(getattr(self, a), getattr(other, a))
                   for a in ("feature", "threshold", "left", "right", "weight"))


def grow_tree_with_leaves(X: np.ndarray, grad_hess: GradHess,
                          params: HyperParams, rows=None, order=None):
    """Grow one tree; also return the leaf index of each row in ``rows``.

    ``order`` may carry a precomputed :func:`_presort` of ``X[rows]``; it is
    copied, not consumed.
    """
    g, h = grad_hess.g, grad_hess.h
    if rows is None:
        Xl, gl, hl = X, g, h
    else:
        rows = np.asarray(rows, dtype=np.intp)
        if rows.size == 0:
            raise ValueError("grow_tree needs a nonempty row set")
        Xl, gl, hl = X[rows], g[rows], h[rows]
    Xl = np.ascontiguousarray(Xl, dtype=np.float64)
    if Xl.shape[0] == 0:
        raise ValueError("grow_tree needs a nonempty row set")
    idx = _presort(Xl) if order is None else order.copy()
    f, t, l, r, w, n_nodes, leaf_of = _kernels.grow(
        Xl, np.ascontiguousarray(gl, dtype=np.float64),
        np.ascontiguousarray(hl, dtype=np.float64), idx, int(params.max_depth),
        float(params.weight_penalty), float(params.leaf_penalty),
        float(params.min_child_hessian))
    tree = RegressionTree(f[:n_nodes], t[:n_nodes], l[:n_nodes], r[:n_nodes], w[:n_nodes])
    return tree, leaf_of


def grow_tree(rows, grad_hess: GradHess, X: np.ndarray,
              params: HyperParams) -> RegressionTree:
    """Grow one tree depth-first until ``max_depth`` or no positive-gain split.

    Leaves with ``H + lambda == 0`` (only possible when every weight is zero)
    get weight 0.
    """
    return grow_tree_with_leaves(X, grad_hess, params, rows)[0]


class BoostedEnsemble:
    """Additive trees; prediction is ``base_score`` plus ``eta`` times each tree in turn."""

    def __init__(self, trees, shrinkage: float, base_score: float = 0.0,
                 n_features: Optional[int] = None):
        self.trees = list(trees)
        self.shrinkage = float(shrinkage)
        self.base_score = float(base_score)
        self.n_features = n_features

    def __len__(self) -> int:
        return len(self.trees)

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X, single

    def staged_predict(self, X) -> Iterator[np.ndarray]:
        """Yield predictions after each tree (K = 1, 2, ...)."""
        X, _ = self._check(X)
        f = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            f = f + self.shrinkage * tree.predict(X)
            yield f

    def predict(self, X, rounds: Optional[int] = None):
        """Predict for a row or a matrix, optionally using only the first ``rounds`` trees."""
        X, single = self._check(X)
        f = np.full(X.shape[0], self.base_score)
        for tree in self.trees[:rounds]:
            f = f + self.shrinkage * tree.predict(X)
        return float(f[0]) if single else f

    def truncated(self, rounds: int) -> "BoostedEnsemble":
        return BoostedEnsemble(self.trees[:rounds], self.shrinkage,
                               self.base_score, self.n_features)

    def to_dict(self) -> dict:
        d = {"base_score": self.base_score, "eta": self.shrinkage,
             "trees": [t.to_dict() for t in self.trees]}
        if self.n_features is not None:
            d["n_features"] = self.n_features
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedEnsemble":
        return cls([RegressionTree.from_dict(t) for t in d["trees"]],
                   d["eta"], d["base_score"], d.get("n_features"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BoostedEnsemble":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoostedEnsemble):
            return NotImplemented
        return (self.shrinkage == other.shrinkage and self.base_score == other.base_score
                and self.trees == other.trees)


def train(X: np.ndarray, loss: LossSpec, params: HyperParams) -> BoostedEnsemble:
    """Forward-stagewise boosting from a zero base score.

    Stops early only when every gradient is exactly zero, since each further
    round would add a single zero-weight leaf.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if len(loss) != n:
        raise ValueError(f"loss has {len(loss)} observations, X has {n} rows")
    eta = params.shrinkage
    Xc = np.ascontiguousarray(X)
    order = _presort(Xc)
    pred = np.zeros(n)
    trees = []
    for t in range(params.rounds):
        gh = loss.grad_hess(pred)
        try:
            gh.check()
        except FloatingPointError as exc:
            raise FloatingPointError(f"round {t + 1}: {exc}") from None
        if not gh.g.any():
            logger.debug("all gradients zero at round %d; stopping", t + 1)
            break
        tree, leaf_of = grow_tree_with_leaves(Xc, gh, params, order=order)
        trees.append(tree)
        pred = pred + eta * tree.weight[leaf_of]
    return BoostedEnsemble(trees, eta, 0.0, X.shape[1])


def predict(model: BoostedEnsemble, x):
    return model.predict(x)
