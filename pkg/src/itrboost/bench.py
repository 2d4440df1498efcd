"""Simulation study runner: scenarios x sizes x replications x methods.

Hyperparameters are tuned once per (scenario, size, method) on the first
replication's training data and reused, unless ``tune_every_rep`` is set.
Every (scenario, size, replication) cell is seeded from the master seed
alone, so the worker count never changes the output.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ._util import derive_seed, worker_count
from .boosting import HyperParams
from .evaluate import estimate_value, misclassification
from .itr import BOOSTING_METHODS, METHODS, dlearning_target, fit_method
from .sim import ScenarioSpec, generate
from .tune import DEFAULT_GRID, Grid, cross_validate, lasso_grid

logger = logging.getLogger(__name__)

DISPLAY_NAMES = {
    "indirect-boosting": "IndirectBoosting",
    "direct-boosting-1": "DirectBoosting-I",
    "direct-boosting-2": "DirectBoosting-II",
    "q-linear": "Q-learning",
    "d-linear": "D-learning",
}
_FROM_DISPLAY = {v: k for k, v in DISPLAY_NAMES.items()}

ROLE_TRAIN, ROLE_TEST, ROLE_CV = 0, 1, 2

SUMMARY_COLUMNS = ("method", "scenario", "n", "p", "mean_misclassification",
                   "sd_misclassification", "mean_value", "sd_value", "replications",
                   "failed")
CELL_COLUMNS = ("replication", "train_seed", "test_seed", "misclassification", "value",
                "oracle_value", "status", "params")

# D-learning switches to the l1-penalized fit above this dimension
LASSO_DIMENSION = 10


def canonical_method(name: str) -> str:
    name = _FROM_DISPLAY.get(name, name)
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}")
    return name


@dataclass(frozen=True)
class BenchConfig:
    scenarios: Sequence[int] = (1, 2, 3, 4, 5)
    sizes: Sequence[tuple] = ((400, 10),)
    replications: int = 20
    test_n: int = 3000
    methods: Sequence[str] = METHODS
    master_seed: int = 0
    tuning: Union[Grid, HyperParams] = DEFAULT_GRID
    cv_folds: int = 10
    tune_every_rep: bool = False

    def __post_init__(self):
        if not self.scenarios or not self.sizes or not self.methods:
            raise ValueError("scenarios, sizes and methods must be nonempty")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.test_n < 1:
            raise ValueError("test_n must be >= 1")
        object.__setattr__(self, "methods", tuple(canonical_method(m) for m in self.methods))
        object.__setattr__(self, "sizes", tuple((int(n), int(p)) for n, p in self.sizes))
        object.__setattr__(self, "scenarios", tuple(int(s) for s in self.scenarios))
        # validates scenario ids and dimension minima up front
        for s in self.scenarios:
            for n, p in self.sizes:
                ScenarioSpec(s, n, p, 0)

    def to_dict(self) -> dict:
        tuning = ({"grid": self.tuning.to_dict()} if isinstance(self.tuning, Grid)
                  else {"params": self.tuning.to_dict()})
        return {"scenarios": list(self.scenarios), "sizes": [list(s) for s in self.sizes],
                "replications": self.replications, "test_n": self.test_n,
                "methods": [DISPLAY_NAMES[m] for m in self.methods],
                "master_seed": self.master_seed, "tuning": tuning,
                "cv_folds": self.cv_folds, "tune_every_rep": self.tune_every_rep}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        t = d.get("tuning", {})
        if "params" in t:
            tuning = HyperParams(**t["params"])
        else:
            tuning = Grid.from_dict(t.get("grid", {}))
        return cls(scenarios=tuple(d.get("scenarios", (1, 2, 3, 4, 5))),
                   sizes=tuple(tuple(s) for s in d.get("sizes", ((400, 10),))),
                   replications=int(d.get("replications", 20)),
                   test_n=int(d.get("test_n", 3000)),
                   methods=tuple(d.get("methods", METHODS)),
                   master_seed=int(d.get("master_seed", 0)), tuning=tuning,
                   cv_folds=int(d.get("cv_folds", 10)),
                   tune_every_rep=bool(d.get("tune_every_rep", False)))


def cell_seed(master_seed: int, scenario: int, n: int, p: int, rep: int, role: int) -> int:
    return derive_seed(master_seed, scenario, n, p, rep, role)


def _tune(method, train, config: BenchConfig, cv_seed: int):
    """Selected setting for one method: HyperParams, a lasso penalty, or None."""
    if method == "q-linear":
        return None
    if method == "d-linear":
        if train.p <= LASSO_DIMENSION:
            return None
        grid = Grid(lasso_penalties=lasso_grid(train.covariates, *dlearning_target(train)))
        return cross_validate(method, train, grid, config.cv_folds, cv_seed).best
    if isinstance(config.tuning, HyperParams):
        return config.tuning
    return cross_validate(method, train, config.tuning, config.cv_folds, cv_seed).best


def _fit(method, train, setting):
    if method in BOOSTING_METHODS:
        return fit_method(method, train, setting)
    if method == "d-linear":
        return fit_method(method, train, lasso_penalty=setting)
    return fit_method(method, train)


def _setting_json(setting) -> str:
    if isinstance(setting, HyperParams):
        return json.dumps(setting.to_dict(), sort_keys=True)
    return json.dumps({"lasso_penalty": setting})


def _tune_task(config: BenchConfig, scenario, n, p, method):
    seed = cell_seed(config.master_seed, scenario, n, p, 0, ROLE_TRAIN)
    train = generate(ScenarioSpec(scenario, n, p, seed)).data
    cv_seed = cell_seed(config.master_seed, scenario, n, p, 0, ROLE_CV)
    try:
        return _tune(method, train, config, cv_seed)
    except Exception as exc:  # recorded on every cell of this method
        return _Failed(f"tuning failed: {exc}")


@dataclass(frozen=True)
class _Failed:
    reason: str


def _cell_task(config: BenchConfig, scenario, n, p, rep, settings: dict):
    train_seed = cell_seed(config.master_seed, scenario, n, p, rep, ROLE_TRAIN)
    test_seed = cell_seed(config.master_seed, scenario, n, p, rep, ROLE_TEST)
    train = generate(ScenarioSpec(scenario, n, p, train_seed)).data
    test = generate(ScenarioSpec(scenario, config.test_n, p, test_seed))
    oracle_value = estimate_value(test.oracle_decisions, test.data)
    out = {}
    for method in config.methods:
        rec = {"replication": rep, "train_seed": train_seed, "test_seed": test_seed,
               "oracle_value": oracle_value, "misclassification": math.nan,
               "value": math.nan, "status": "ok", "params": ""}
        setting = settings.get(method)
        try:
            if config.tune_every_rep:
                cv_seed = cell_seed(config.master_seed, scenario, n, p, rep, ROLE_CV)
                setting = _tune(method, train, config, cv_seed)
            if isinstance(setting, _Failed):
                raise RuntimeError(setting.reason)
            rec["params"] = _setting_json(setting)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                policy = _fit(method, train, setting)
            d = policy.decide(test.data.covariates)
            rec["misclassification"] = misclassification(d, test.oracle_decisions)
            rec["value"] = estimate_value(d, test.data)
        except Exception as exc:
            rec["status"] = f"failed: {exc}"
        out[method] = rec
    return out


@dataclass
class BenchSummary:
    rows: list
    cells: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def row(self, method: str, scenario: int, n: int, p: int) -> dict:
        m = DISPLAY_NAMES[canonical_method(method)]
        return next(r for r in self.rows
                    if (r["method"], r["scenario"], r["n"], r["p"]) == (m, scenario, n, p))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _summarize(values):
    arr = np.array(values, dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, sd


def _pool_map(fn, args_list, workers):
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=min(workers, len(args_list))) as pool:
        return list(pool.map(fn, *zip(*args_list)))


def run(config: BenchConfig, out_dir: Optional[Union[str, Path]] = None,
        workers: Optional[int] = None) -> BenchSummary:
    """Run the study; if ``out_dir`` is given, persist summary, per-cell files and config."""
    workers = worker_count() if workers is None else workers
    if config.replications >= 100:
        warnings.warn(f"{config.replications} replications will take a long time",
                      RuntimeWarning, stacklevel=2)
    _check_seeds(config)

    keys = [(s, n, p) for s in config.scenarios for n, p in config.sizes]
    settings = {}
    if not config.tune_every_rep:
        tune_args = [(config, s, n, p, m) for s, n, p in keys for m in config.methods]
        for (cfg, s, n, p, m), res in zip(tune_args, _pool_map(_tune_task, tune_args, workers)):
            settings.setdefault((s, n, p), {})[m] = res

    cell_args = [(config, s, n, p, r, settings.get((s, n, p), {}))
                 for s, n, p in keys for r in range(config.replications)]
    results = _pool_map(_cell_task, cell_args, workers)

    cells = {}
    for (_, s, n, p, r, _), res in zip(cell_args, results):
        for m, rec in res.items():
            cells.setdefault((s, n, p, m), []).append(rec)

    rows = []
    for s, n, p in keys:
        for m in config.methods:
            recs = cells[(s, n, p, m)]
            good = [r for r in recs if r["status"] == "ok"]
            mm, sdm = _summarize([r["misclassification"] for r in good])
            mv, sdv = _summarize([r["value"] for r in good])
            rows.append({"method": DISPLAY_NAMES[m], "scenario": s, "n": n, "p": p,
                         "mean_misclassification": mm, "sd_misclassification": sdm,
                         "mean_value": mv, "sd_value": sdv, "replications": len(good),
                         "failed": len(recs) - len(good)})
    summary = BenchSummary(rows, cells, settings)
    if out_dir is not None:
        write_outputs(summary, config, out_dir)
    return summary


def _check_seeds(config: BenchConfig) -> None:
    seen = {}
    for s in config.scenarios:
        for n, p in config.sizes:
            for r in range(config.replications):
                for role in (ROLE_TRAIN, ROLE_TEST, ROLE_CV):
                    sd = cell_seed(config.master_seed, s, n, p, r, role)
                    if sd in seen:
                        raise RuntimeError(f"seed collision between {seen[sd]} and "
                                           f"{(s, n, p, r, role)}")
                    seen[sd] = (s, n, p, r, role)


def write_outputs(summary: BenchSummary, config: BenchConfig, out_dir) -> None:
    out = Path(out_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in summary.rows:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    for (s, n, p, m), recs in sorted(summary.cells.items()):
        with open(out / "cells" / f"{s}_{n}_{p}_{m}.csv", "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CELL_COLUMNS)
            for rec in recs:
                w.writerow([_fmt(rec[c]) for c in CELL_COLUMNS])
    echo = config.to_dict()
    echo["seeds"] = [
        {"scenario": s, "n": n, "p": p, "replication": r,
         "train": cell_seed(config.master_seed, s, n, p, r, ROLE_TRAIN),
         "test": cell_seed(config.master_seed, s, n, p, r, ROLE_TEST),
         "cv": cell_seed(config.master_seed, s, n, p, r, ROLE_CV)}
        for s in config.scenarios for n, p in config.sizes
        for r in range(config.replications)]
    echo["selected"] = [
        {"scenario": s, "n": n, "p": p, "method": DISPLAY_NAMES[m],
         "setting": (st.reason if isinstance(st, _Failed) else json.loads(_setting_json(st)))}
        for (s, n, p), per in sorted(summary.settings.items()) for m, st in per.items()]
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")
