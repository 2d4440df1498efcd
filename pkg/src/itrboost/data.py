"""Trial datasets: construction, CSV I/O, propensities and fold partitioning."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ._util import STREAM_FOLDS, stream


class DataError(ValueError):
    """Raised for malformed or invariant-violating trial data."""


@dataclass(frozen=True)
class PropensitySpec:
    """Where the probability of the received treatment comes from.

    Exactly one of ``value`` (a constant) or ``column`` (a CSV column name)
    is set.
    """

    value: Optional[float] = None
    column: Optional[str] = None

    def __post_init__(self):
        if (self.value is None) == (self.column is None):
            raise ValueError("PropensitySpec needs exactly one of value or column")
        if self.value is not None and not 0.0 < self.value < 1.0:
            raise ValueError(f"constant propensity must lie in (0,1), got {self.value}")

    @classmethod
    def constant(cls, value: float = 0.5) -> "PropensitySpec":
        return cls(value=float(value))

    @classmethod
    def from_column(cls, name: str = "propensity") -> "PropensitySpec":
        return cls(column=name)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable trial data ``(X, A, Y, pi_A(X))``.

    Covariates are stored column-major so per-feature scans are contiguous.
    """

    __slots__ = ("covariates", "treatments", "outcomes", "propensities")

    def __init__(self, covariates, treatments, outcomes, propensities=None):
        X = np.array(covariates, dtype=np.float64, order="F", ndmin=2)
        A = np.asarray(treatments)
        Y = np.array(outcomes, dtype=np.float64).ravel()
        n = Y.shape[0]
        if propensities is None:
            P = np.full(n, 0.5)
        else:
            P = np.array(propensities, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise DataError("covariates must be a 2-d array")
        if n < 1 or X.shape[1] < 1:
            raise DataError("dataset needs n >= 1 rows and p >= 1 covariates")
        if not (X.shape[0] == A.shape[0] == P.shape[0] == n):
            raise DataError(
                f"length mismatch: covariates {X.shape[0]}, treatments {A.shape[0]}, "
                f"outcomes {n}, propensities {P.shape[0]}")
        if not np.all((A == 1) | (A == -1)):
            bad = int(np.flatnonzero((A != 1) & (A != -1))[0])
            raise DataError(f"treatment at index {bad} is {A[bad]!r}, expected -1 or +1")
        for name, arr in (("covariates", X), ("outcomes", Y), ("propensities", P)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contain NaN or Inf")
        if not np.all((P > 0.0) & (P < 1.0)):
            bad = int(np.flatnonzero((P <= 0.0) | (P >= 1.0))[0])
            raise DataError(f"propensity at index {bad} is {P[bad]}, must lie in (0,1)")
        object.__setattr__(self, "covariates", _readonly(X))
        object.__setattr__(self, "treatments", _readonly(A.astype(np.int8)))
        object.__setattr__(self, "outcomes", _readonly(Y))
        object.__setattr__(self, "propensities", _readonly(P))

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    def __reduce__(self):
        return (Dataset, (np.asarray(self.covariates), self.treatments, self.outcomes,
                          self.propensities))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (np.array_equal(self.covariates, other.covariates)
                and np.array_equal(self.treatments, other.treatments)
                and np.array_equal(self.outcomes, other.outcomes)
                and np.array_equal(self.propensities, other.propensities))

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, p={self.p})"


def split(data: Dataset, indices) -> Dataset:
    """Row subset of ``data`` in the given index order."""
    idx = np.asarray(indices)
    if idx.dtype == bool:
        if idx.shape != (data.n,):
            raise DataError("boolean mask has wrong length")
        idx = np.flatnonzero(idx)
    idx = idx.astype(np.intp, copy=False).ravel()
    if idx.size == 0:
        raise DataError("empty index set")
    if idx.min() < 0 or idx.max() >= data.n:
        raise DataError(f"index out of range for n={data.n}")
    return Dataset(data.covariates[idx], data.treatments[idx],
                   data.outcomes[idx], data.propensities[idx])


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int
    seed: int

    def indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train, held-out) index arrays for one fold."""
        held = self.fold_of == fold
        return np.flatnonzero(~held), np.flatnonzero(held)


def make_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """Balanced, seeded k-fold assignment; fold sizes differ by at most one."""
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = stream(seed, STREAM_FOLDS).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(_readonly(fold_of), int(k), int(seed))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(data: Dataset, path: Union[str, Path], *,
              include_propensity: bool = False,
              extra: Optional[Mapping[str, Sequence]] = None) -> None:
    """Write ``x_1..x_p,treatment,outcome[,propensity][,extra...]``.

    Reals use shortest round-trip formatting so a reload is exact.
    """
    header = [f"x_{j + 1}" for j in range(data.p)] + ["treatment", "outcome"]
    if include_propensity:
        header.append("propensity")
    extra = dict(extra or {})
    header.extend(extra)
    cols = [list(v) for v in extra.values()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [_fmt(v) for v in data.covariates[i]]
            row.append(str(int(data.treatments[i])))
            row.append(_fmt(data.outcomes[i]))
            if include_propensity:
                row.append(_fmt(data.propensities[i]))
            for c in cols:
                v = c[i]
                row.append(str(int(v)) if isinstance(v, (int, np.integer)) else _fmt(v))
            w.writerow(row)


def read_table(path: Union[str, Path]) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file, header row required")
    return [h.strip() for h in rows[0]], rows[1:]


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"row {row}: column {col!r} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}: column {col!r} is not finite: {text!r}")
    return v


def load_csv(path: Union[str, Path],
             propensity: Optional[PropensitySpec] = None) -> Dataset:
    """Load a trial CSV.

    Feature columns are those prefixed ``x_``, kept in file order. Row
    numbers in error messages count the header as row 1.
    """
    propensity = propensity or PropensitySpec.constant(0.5)
    header, body = read_table(path)
    for required in ("treatment", "outcome"):
        if required not in header:
            raise DataError(f"{path}: missing column {required!r}")
    feat = [j for j, h in enumerate(header) if h.startswith("x_")]
    if not feat:
        raise DataError(f"{path}: no feature columns (prefix 'x_')")
    ti, yi = header.index("treatment"), header.index("outcome")
    pi = None
    if propensity.column is not None:
        if propensity.column not in header:
            raise DataError(f"{path}: missing propensity column {propensity.column!r}")
        pi = header.index(propensity.column)
    if not body:
        raise DataError(f"{path}: no data rows")

    n = len(body)
    X = np.empty((n, len(feat)))
    A = np.empty(n, dtype=np.int8)
    Y = np.empty(n)
    P = np.full(n, propensity.value if propensity.value is not None else np.nan)
    for r, fields in enumerate(body):
        rowno = r + 2
        if len(fields) != len(header):
            raise DataError(f"row {rowno}: expected {len(header)} fields, got {len(fields)}")
        for c, j in enumerate(feat):
            X[r, c] = _parse_float(fields[j], rowno, header[j])
        t = fields[ti].strip()
        if t not in ("1", "-1", "+1"):
            raise DataError(f"row {rowno}: treatment must be -1 or 1, got {t!r}")
        A[r] = int(t)
        Y[r] = _parse_float(fields[yi], rowno, "outcome")
        if pi is not None:
            v = _parse_float(fields[pi], rowno, header[pi])
            if not 0.0 < v < 1.0:
                raise DataError(f"row {rowno}: propensity {v} outside (0,1)")
            P[r] = v
    return Dataset(X, A, Y, P)


def load_covariates(path: Union[str, Path]) -> np.ndarray:
    """Feature matrix only (``x_`` columns); treatment and outcome may be absent."""
    header, body = read_table(path)
    feat = [j for j, h in enumerate(header) if h.startswith("x_")]
    if not feat:
        raise DataError(f"{path}: no feature columns (prefix 'x_')")
    if not body:
        raise DataError(f"{path}: no data rows")
    X = np.empty((len(body), len(feat)))
    for r, fields in enumerate(body):
        if len(fields) != len(header):
            raise DataError(f"row {r + 2}: expected {len(header)} fields, got {len(fields)}")
        for c, j in enumerate(feat):
            X[r, c] = _parse_float(fields[j], r + 2, header[j])
    return X


def column(path: Union[str, Path], name: str) -> np.ndarray:
    """Read one numeric column from a CSV (e.g. an ``oracle`` column)."""
    header, body = read_table(path)
    if name not in header:
        raise DataError(f"{path}: missing column {name!r}")
    j = header.index(name)
    return np.array([_parse_float(f[j], r + 2, name) for r, f in enumerate(body)])


def arms(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the +1 and -1 arms."""
    return np.flatnonzero(data.treatments == 1), np.flatnonzero(data.treatments == -1)

