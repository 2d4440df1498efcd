"""Rule evaluation: inverse-propensity value estimate, misclassification, Welch's t-test."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import special

from .data import Dataset


class EvaluationError(ValueError):
    pass


def estimate_value(decisions, data: Dataset) -> float:
    """Ratio estimate of the mean outcome had everyone followed ``decisions``.

    Only rows whose received treatment matches the rule contribute, each
    weighted by ``1 / pi``.
    """
    d = np.asarray(decisions)
    if d.shape != (data.n,):
        raise EvaluationError(f"expected {data.n} decisions, got shape {d.shape}")
    match = d == data.treatments
    if not match.any():
        raise EvaluationError("no row's treatment matches the rule (match count 0)")
    w = 1.0 / data.propensities[match]
    # weights relative to one row cancel exactly when the propensity is constant
    r = w / w[0]
    return float(np.sum(r * data.outcomes[match]) / np.sum(r))


def misclassification(decisions, oracle) -> float:
    a, b = np.asarray(decisions), np.asarray(oracle)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise EvaluationError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(a != b))


@dataclass(frozen=True)
class WelchResult:
    t: float
    dof: float
    p_one_sided: float

    @property
    def p_two_sided(self) -> float:
        return min(1.0, 2.0 * min(self.p_one_sided, 1.0 - self.p_one_sided))


def t_sf(t: float, dof: float) -> float:
    """Upper tail P(T > t) of Student's t via the regularized incomplete beta."""
    x = dof / (dof + t * t)
    tail = 0.5 * special.betainc(0.5 * dof, 0.5, x)
    return float(tail if t >= 0 else 1.0 - tail)


def welch_test(group1, group2) -> WelchResult:
    """One-sided Welch test of H_A: mean(group1) > mean(group2)."""
    x = np.asarray(group1, dtype=np.float64)
    y = np.asarray(group2, dtype=np.float64)
    if x.size < 2 or y.size < 2:
        raise EvaluationError("each group needs at least 2 observations")
    vx, vy = x.var(ddof=1) / x.size, y.var(ddof=1) / y.size
    se2 = vx + vy
    if se2 == 0:
        raise EvaluationError("both groups have zero variance")
    t = (x.mean() - y.mean()) / np.sqrt(se2)
    dof = se2 ** 2 / (vx ** 2 / (x.size - 1) + vy ** 2 / (y.size - 1))
    return WelchResult(float(t), float(dof), t_sf(float(t), float(dof)))


@dataclass
class EvalReport:
    value: float
    misclassification: Optional[float] = None
    welch: Optional[WelchResult] = None

    def to_dict(self) -> dict:
        d = {"value": self.value, "misclassification": self.misclassification,
             "welch": asdict(self.welch) if self.welch else None}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate(decisions, data: Dataset, oracle=None) -> EvalReport:
    value = estimate_value(decisions, data)
    mis = misclassification(decisions, oracle) if oracle is not None else None
    return EvalReport(value, mis)


REPORT_COLUMNS = ("method", "scenario", "n", "p", "seed", "value",
                  "misclassification", "p_value")


def write_report_csv(path, rows) -> None:
    """Write report rows (dicts keyed by :data:`REPORT_COLUMNS`); missing keys stay blank."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in REPORT_COLUMNS})
