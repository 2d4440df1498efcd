"""k-fold cross-validation that picks the candidate with the largest mean held-out value."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .boosting import HyperParams
from .data import Dataset, make_folds, split
from .evaluate import EvaluationError, estimate_value
from .itr import (BOOSTING_METHODS, METHODS, ItrError, LassoConfig, fit_method,
                  lasso_lambda_max, weighted_lasso)

logger = logging.getLogger(__name__)

ARM_SPLITTING = ("indirect-boosting", "q-linear")


@dataclass(frozen=True)
class Grid:
    rounds: Sequence[int] = (50, 100, 200, 400)
    shrinkages: Sequence[float] = (0.05, 0.1, 0.3)
    depths: Sequence[int] = (2, 3, 4)
    leaf_penalties: Sequence[float] = (0.0,)
    weight_penalties: Sequence[float] = (1.0,)
    min_child_hessian: float = 0.0
    lasso_penalties: Optional[Sequence[float]] = None

    def __post_init__(self):
        for name in ("rounds", "shrinkages", "depths", "leaf_penalties", "weight_penalties"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"grid list {name!r} is empty")
        if self.lasso_penalties is not None and len(self.lasso_penalties) == 0:
            raise ValueError("grid list 'lasso_penalties' is empty")
        # validates every bound
        self.params()

    def params(self) -> list[HyperParams]:
        return [HyperParams(rounds=K, shrinkage=eta, max_depth=d, leaf_penalty=gam,
                            weight_penalty=lam, min_child_hessian=self.min_child_hessian)
                for K, eta, d, gam, lam in itertools.product(
                    self.rounds, self.shrinkages, self.depths,
                    self.leaf_penalties, self.weight_penalties)]

    def candidates(self, method: str) -> list:
        if method in BOOSTING_METHODS:
            return self.params()
        if method == "d-linear":
            return list(self.lasso_penalties) if self.lasso_penalties else [None]
        if method == "q-linear":
            return [None]
        raise ValueError(f"unknown method {method!r}")

    def to_dict(self) -> dict:
        return {"rounds": list(self.rounds), "shrinkages": list(self.shrinkages),
                "depths": list(self.depths), "leaf_penalties": list(self.leaf_penalties),
                "weight_penalties": list(self.weight_penalties),
                "min_child_hessian": self.min_child_hessian,
                "lasso_penalties": None if self.lasso_penalties is None
                else list(self.lasso_penalties)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        defaults = cls()
        return cls(
            rounds=tuple(d.get("rounds", defaults.rounds)),
            shrinkages=tuple(d.get("shrinkages", defaults.shrinkages)),
            depths=tuple(d.get("depths", defaults.depths)),
            leaf_penalties=tuple(d.get("leaf_penalties", defaults.leaf_penalties)),
            weight_penalties=tuple(d.get("weight_penalties", defaults.weight_penalties)),
            min_child_hessian=d.get("min_child_hessian", defaults.min_child_hessian),
            lasso_penalties=None if d.get("lasso_penalties") is None
            else tuple(d["lasso_penalties"]))


DEFAULT_GRID = Grid()


def parsimony_key(candidate):
    """Order among equal CV values: fewer rounds, larger shrinkage, shallower trees.

    For lasso penalties, larger (sparser) first; the unpenalized fit sorts last.
    """
    if isinstance(candidate, HyperParams):
        return (candidate.rounds, -candidate.shrinkage, candidate.max_depth,
                -candidate.leaf_penalty, -candidate.weight_penalty,
                -candidate.min_child_hessian)
    if candidate is None:
        return (math.inf,)
    return (-float(candidate),)


@dataclass
class CandidateResult:
    candidate: object
    fold_values: list
    mean: float
    se: float
    status: str = "ok"

    def row(self) -> dict:
        c = self.candidate
        if isinstance(c, HyperParams):
            d = c.to_dict()
        else:
            d = {"lasso_penalty": "" if c is None else c}
        d.update(mean_value=self.mean, se=self.se, status=self.status)
        return d


@dataclass
class TuneResult:
    method: str
    best: object
    table: list = field(default_factory=list)

    def best_row(self) -> CandidateResult:
        return next(r for r in self.table if r.candidate == self.best)

    def to_csv(self, path) -> None:
        rows = [r.row() for r in self.table]
        fields = list(rows[0].keys())
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


def _fold_task(method, data, train_idx, held_idx, candidates, fit_kwargs):
    """Held-out values for every candidate on one fold; failures map to an error string."""
    train = split(data, train_idx)
    held = split(data, held_idx)
    out = {}
    if method in BOOSTING_METHODS:
        groups = defaultdict(list)
        for i, c in enumerate(candidates):
            groups[c.replace(rounds=1)].append(i)
        for base, members in groups.items():
            top = max(candidates[i].rounds for i in members)
            try:
                policy = fit_method(method, train, base.replace(rounds=top), **fit_kwargs)
            except (ItrError, ArithmeticError, ValueError) as exc:
                for i in members:
                    out[i] = f"fit failed: {exc}"
                continue
            for i in members:
                out[i] = _held_value(policy.truncated(candidates[i].rounds), held)
    else:
        for i, c in enumerate(candidates):
            kw = dict(fit_kwargs)
            if method == "d-linear":
                kw["lasso_penalty"] = c
            try:
                policy = fit_method(method, train, **kw)
            except (ItrError, ArithmeticError, ValueError, RuntimeError) as exc:
                out[i] = f"fit failed: {exc}"
                continue
            out[i] = _held_value(policy, held)
    return out


def _held_value(policy, held: Dataset) -> float:
    try:
        return estimate_value(policy.decide(held.covariates), held)
    except EvaluationError:
        return -math.inf


def cross_validate(method: str, data: Dataset, grid: Grid = DEFAULT_GRID, k: int = 10,
                   seed: int = 0, *, workers: int = 1, **fit_kwargs) -> TuneResult:
    """Select the candidate maximizing the mean held-out value over ``k`` folds."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    candidates = grid.candidates(method)
    folds = make_folds(data.n, k, seed)
    tasks = []
    for f in range(k):
        train_idx, held_idx = folds.indices(f)
        if method in ARM_SPLITTING:
            arm_vals = data.treatments[train_idx]
            for arm in (1, -1):
                if not np.any(arm_vals == arm):
                    raise ItrError(f"fold {f}: training part has an empty {arm:+d} arm")
        tasks.append((method, data, train_idx, held_idx, candidates, fit_kwargs))

    if workers > 1 and k > 1:
        with ProcessPoolExecutor(max_workers=min(workers, k)) as pool:
            per_fold = list(pool.map(_fold_task, *zip(*tasks)))
    else:
        per_fold = [_fold_task(*t) for t in tasks]

    table = []
    for i, c in enumerate(candidates):
        vals = [pf[i] for pf in per_fold]
        errors = [v for v in vals if isinstance(v, str)]
        if errors:
            table.append(CandidateResult(c, [], -math.inf, math.nan, errors[0]))
            continue
        arr = np.array(vals, dtype=np.float64)
        mean = float(arr.mean())
        se = float(arr.std(ddof=1) / math.sqrt(k)) if np.all(np.isfinite(arr)) else math.nan
        table.append(CandidateResult(c, vals, mean, se))

    ok = [r for r in table if r.status == "ok"]
    if not ok:
        raise ItrError(f"every candidate failed to fit; first reason: {table[0].status}")
    best = min(ok, key=lambda r: (-r.mean, parsimony_key(r.candidate)))
    logger.info("%s: selected %s (mean value %.4f)", method, best.candidate, best.mean)
    return TuneResult(method, best.candidate, table)


LASSO_FRACTIONS = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003)


def lasso_grid(X, y, w, fractions=LASSO_FRACTIONS) -> tuple:
    """Penalties spaced down from the all-zero threshold."""
    top = lasso_lambda_max(X, y, w)
    return tuple(top * f for f in fractions)


def select_lasso_penalty(X, y, w, penalties=None, k: int = 5, seed: int = 0) -> float:
    """Penalty with the smallest held-out weighted squared error of the lasso fit.

    Used for the common-effect regression, whose target is the outcome itself
    rather than a treatment rule.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if penalties is None:
        penalties = lasso_grid(X, y, w)
    folds = make_folds(y.size, k, seed)
    err = []
    for lam in penalties:
        total = 0.0
        for f in range(k):
            tr, ho = folds.indices(f)
            b0, b = weighted_lasso(X[tr], y[tr], w[tr], LassoConfig(lam))
            total += float(w[ho] @ (y[ho] - b0 - X[ho] @ b) ** 2)
        err.append(total)
    best = min(range(len(penalties)), key=lambda i: (err[i], -penalties[i]))
    return float(penalties[best])
