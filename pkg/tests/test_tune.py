import math

import numpy as np
import pytest

from itrboost.boosting import HyperParams
from itrboost.data import Dataset
from itrboost.evaluate import estimate_value
from itrboost.itr import ItrError, fit_method
from itrboost.sim import ScenarioSpec, generate
from itrboost.tune import (DEFAULT_GRID, Grid, TuneResult, cross_validate, lasso_grid,
                           parsimony_key, select_lasso_penalty)

SMALL = Grid(rounds=(10, 30), shrinkages=(0.1, 0.3), depths=(2,))


@pytest.fixture(scope="module")
def data():
    return generate(ScenarioSpec(1, 120, 4, 3)).data


def test_default_grid():
    assert len(DEFAULT_GRID.params()) == 36
    assert DEFAULT_GRID.params()[0] == HyperParams(rounds=50, shrinkage=0.05, max_depth=2)


@pytest.mark.parametrize("bad", [dict(rounds=()), dict(shrinkages=(0.0,)), dict(depths=(0,)),
                                 dict(lasso_penalties=())])
def test_grid_validation(bad):
    with pytest.raises(ValueError):
        Grid(**bad)


def test_grid_dict_round_trip():
    g = Grid(rounds=(5,), lasso_penalties=(1.0, 0.1))
    assert Grid.from_dict(g.to_dict()) == g


def test_singleton(data):
    g = Grid(rounds=(10,), shrinkages=(0.1,), depths=(2,))
    res = cross_validate("direct-boosting-1", data, g, k=3, seed=0)
    assert res.best == g.params()[0] and len(res.table) == 1


def test_tie_goes_to_fewer_rounds():
    rng = np.random.default_rng(0)
    d = Dataset(rng.uniform(size=(40, 2)), rng.choice([-1, 1], size=40), np.full(40, 3.0))
    g = Grid(rounds=(40, 20), shrinkages=(0.1,), depths=(2,))
    res = cross_validate("indirect-boosting", d, g, k=4, seed=1)
    assert res.table[0].mean == res.table[1].mean
    assert res.best.rounds == 20


def test_parsimony_order():
    a = HyperParams(rounds=50, shrinkage=0.3, max_depth=2)
    b = HyperParams(rounds=50, shrinkage=0.1, max_depth=2)
    c = HyperParams(rounds=100, shrinkage=0.3, max_depth=2)
    assert sorted([c, b, a], key=parsimony_key) == [a, b, c]
    assert sorted([None, 0.1, 1.0], key=parsimony_key) == [1.0, 0.1, None]


def test_mean_containment_and_se(data):
    res = cross_validate("direct-boosting-2", data, SMALL, k=5, seed=2)
    for r in res.table:
        assert min(r.fold_values) <= r.mean <= max(r.fold_values)
        assert r.se == pytest.approx(np.std(r.fold_values, ddof=1) / math.sqrt(5))
    best = res.best_row()
    assert best.mean == max(r.mean for r in res.table)


def test_deterministic(data):
    a = cross_validate("indirect-boosting", data, SMALL, k=4, seed=7)
    b = cross_validate("indirect-boosting", data, SMALL, k=4, seed=7)
    assert a.best == b.best
    assert [r.fold_values for r in a.table] == [r.fold_values for r in b.table]


def test_grid_order_irrelevant(data):
    a = cross_validate("direct-boosting-1", data, SMALL, k=4, seed=3)
    rev = Grid(rounds=(30, 10), shrinkages=(0.3, 0.1), depths=(2,))
    b = cross_validate("direct-boosting-1", data, rev, k=4, seed=3)
    assert a.best == b.best


def test_prefix_scoring_matches_separate_fits(data):
    # fitting once at the largest K and truncating equals fitting each K
    from itrboost.data import make_folds, split
    res = cross_validate("direct-boosting-1", data, SMALL, k=3, seed=5)
    folds = make_folds(data.n, 3, 5)
    c = SMALL.params()[0]
    vals = []
    for f in range(3):
        tr, ho = folds.indices(f)
        held = split(data, ho)
        pol = fit_method("direct-boosting-1", split(data, tr), c)
        vals.append(estimate_value(pol.decide(held.covariates), held))
    assert res.table[0].fold_values == vals


def test_workers_identical(data):
    a = cross_validate("direct-boosting-1", data, SMALL, k=3, seed=1, workers=1)
    b = cross_validate("direct-boosting-1", data, SMALL, k=3, seed=1, workers=2)
    assert [r.fold_values for r in a.table] == [r.fold_values for r in b.table]


def test_empty_arm_fold_reported():
    A = np.array([1] * 19 + [-1])
    d = Dataset(np.arange(20.0)[:, None], A, np.arange(20.0))
    with pytest.raises(ItrError, match="fold .*-1 arm"):
        cross_validate("indirect-boosting", d, SMALL, k=2, seed=0)


@pytest.mark.filterwarnings("ignore")
def test_zero_match_fold_scores_minus_inf():
    # each held-out fold received only the arm its training fold rules against
    from itrboost.data import make_folds
    fold_of = make_folds(8, 2, 0).fold_of
    A = np.where(fold_of == 0, -1, 1)
    d = Dataset(np.zeros((8, 1)), A, np.ones(8))
    res = cross_validate("d-linear", d, Grid(), k=2, seed=0)
    assert res.table[0].fold_values == [-math.inf, -math.inf]
    assert res.best is None


def test_unknown_method(data):
    with pytest.raises(ValueError):
        cross_validate("forest", data)


def test_all_candidates_fail():
    d = Dataset(np.zeros((10, 12)), [1, -1] * 5, np.arange(10.0))
    with pytest.raises(ItrError, match="every candidate"):
        cross_validate("q-linear", d, Grid(), k=2, seed=0)


def test_to_csv(tmp_path, data):
    res = cross_validate("direct-boosting-1", data, SMALL, k=3, seed=0)
    res.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == ("rounds,shrinkage,max_depth,leaf_penalty,weight_penalty,"
                        "min_child_hessian,mean_value,se,status")
    assert len(lines) == 5


def test_lasso_selection(data):
    y, w = data.outcomes, 1 / data.propensities
    grid = lasso_grid(data.covariates, y, w)
    assert grid[0] > grid[-1] > 0
    assert select_lasso_penalty(data.covariates, y, w, grid, k=3, seed=0) in grid


def test_selected_within_one_se_of_best_on_test_set():
    train = generate(ScenarioSpec(1, 400, 10, 21)).data
    test = generate(ScenarioSpec(1, 20000, 10, 22)).data
    grid = Grid(rounds=(50, 200), shrinkages=(0.1,), depths=(2, 4))
    res = cross_validate("indirect-boosting", train, grid, k=10, seed=0)
    test_values = {}
    for c in grid.params():
        pol = fit_method("indirect-boosting", train, c)
        test_values[c] = estimate_value(pol.decide(test.covariates), test)
    best_test = max(test_values.values())
    assert test_values[res.best] >= best_test - res.best_row().se
