"""Synthetic randomized trials with a known optimal treatment rule.

Outcomes follow ``Y = mu(X) + delta(X) * A + eps`` with
``mu(X) = 1 + 2 x1 + x2 + x3 / 2``, covariates iid U(-1, 1), a fair coin
for ``A`` and standard normal noise. The scenario picks ``delta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ._util import (STREAM_COVARIATES, STREAM_NOISE, STREAM_TREATMENTS, open_uniform,
                    sign, stream)
from .data import Dataset

SCENARIOS = (1, 2, 3, 4, 5)
# covariates read by delta
_DELTA_DIM = {1: 2, 2: 2, 3: 4, 4: 2, 5: 8}
_MU_DIM = 3


def min_dimension(scenario: int) -> int:
    """Smallest p for which a scenario's full outcome model is defined."""
    _check_id(scenario)
    return max(_DELTA_DIM[scenario], _MU_DIM)


def _check_id(scenario):
    if scenario not in _DELTA_DIM:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


def _cols(what, x, need):
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    if X.shape[1] < need:
        raise ValueError(f"{what} needs at least {need} covariates, got {X.shape[1]}")
    return X, x.ndim == 1


def mu(x):
    X, single = _cols("mu", x, _MU_DIM)
    out = 1.0 + 2.0 * X[:, 0] + X[:, 1] + 0.5 * X[:, 2]
    return float(out[0]) if single else out


def delta(scenario: int, x):
    """Treatment interaction delta(x) for one row or a matrix of rows."""
    _check_id(scenario)
    X, single = _cols(f"scenario {scenario}", x, _DELTA_DIM[scenario])
    x1, x2 = X[:, 0], X[:, 1]
    if scenario == 1:
        out = 3.0 * (x1 <= 0.5) * ((x2 > -0.5) - 1.0) + 1.0
    elif scenario == 2:
        out = 1.3 * (x2 - 2.0 * x1 ** 2 + 0.3)
    elif scenario == 3:
        out = 0.2 + x1 ** 2 + x2 ** 2 - X[:, 2] ** 2 - X[:, 3] ** 2
    elif scenario == 4:
        out = 3.8 * (0.8 - x1 ** 2 - x2 ** 2)
    else:
        out = (1.0 - x1 ** 3 + np.exp(X[:, 2] ** 2 + X[:, 4]) + 0.6 * X[:, 5]
               - (X[:, 6] + X[:, 7]) ** 2)
    return float(out[0]) if single else out


def oracle_decide(scenario: int, x):
    """Optimal treatment from the closed-form decision regions.

    Boundary points (where delta is exactly zero) get +1.
    """
    _check_id(scenario)
    X, single = _cols(f"scenario {scenario}", x, _DELTA_DIM[scenario])
    x1, x2 = X[:, 0], X[:, 1]
    if scenario == 1:
        plus = ~((x1 <= 0.5) & (x2 <= -0.5))
    elif scenario == 2:
        plus = x2 - 2.0 * x1 ** 2 + 0.3 >= 0
    elif scenario == 3:
        plus = 0.2 + x1 ** 2 + x2 ** 2 - X[:, 2] ** 2 - X[:, 3] ** 2 >= 0
    elif scenario == 4:
        plus = x1 ** 2 + x2 ** 2 <= 0.8
    else:
        plus = (1.0 - x1 ** 3 + np.exp(X[:, 2] ** 2 + X[:, 4]) + 0.6 * X[:, 5]
                - (X[:, 6] + X[:, 7]) ** 2) >= 0
    out = np.where(plus, 1, -1).astype(np.int8)
    return int(out[0]) if single else out


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    n: int
    p: int
    seed: int

    def __post_init__(self):
        _check_id(self.id)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        need = min_dimension(self.id)
        if self.p < need:
            raise ValueError(f"scenario {self.id} needs p >= {need}, got p={self.p}")


@dataclass(frozen=True)
class SimulatedTrial:
    data: Dataset
    oracle_decisions: np.ndarray
    delta_values: np.ndarray


def generate(spec: ScenarioSpec) -> SimulatedTrial:
    """Draw one trial; covariates, treatments and noise use separate Philox streams."""
    n, p = spec.n, spec.p
    X = 2.0 * stream(spec.seed, STREAM_COVARIATES).random((n, p)) - 1.0
    A = np.where(stream(spec.seed, STREAM_TREATMENTS).random(n) < 0.5, -1, 1)
    eps = ndtri(open_uniform(stream(spec.seed, STREAM_NOISE), n))
    d = delta(spec.id, X)
    Y = mu(X) + d * A + eps
    data = Dataset(X, A, Y, np.full(n, 0.5))
    return SimulatedTrial(data, sign(d), d)
