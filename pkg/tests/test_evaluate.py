import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itrboost.data import Dataset
from itrboost.evaluate import (EvaluationError, EvalReport, estimate_value, evaluate,
                               misclassification, t_sf, welch_test, write_report_csv)

from _oracles import t_sf_quadrature


def trial(n=50, seed=0, pi=0.5):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, 2)), rng.choice([-1, 1], size=n), rng.normal(size=n),
                   np.full(n, pi))


class TestValue:
    def test_rule_equal_to_treatment_gives_mean(self):
        d = trial()
        assert estimate_value(d.treatments, d) == pytest.approx(d.outcomes.mean(), rel=1e-14)

    def test_hand_example(self):
        d = Dataset(np.zeros((4, 1)), [1, -1, 1, -1], [1.0, 2.0, 3.0, 4.0],
                    [0.5, 0.5, 0.25, 0.5])
        # matches rows 0 and 2, weights 2 and 4
        assert estimate_value(np.ones(4, int), d) == pytest.approx((2 + 12) / 6)

    def test_no_match(self):
        d = trial()
        with pytest.raises(EvaluationError, match="0"):
            estimate_value(-d.treatments, Dataset(d.covariates, d.treatments, d.outcomes,
                                                  d.propensities))

    def test_length(self):
        with pytest.raises(EvaluationError):
            estimate_value(np.ones(3), trial())


class TestMisclassification:
    @given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=200),
           st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_axioms(self, a, b):
        a = np.array(a)
        b = np.resize(np.array(b), a.size)
        assert misclassification(a, a) == 0
        assert misclassification(a, -a) == 1
        assert misclassification(a, b) == misclassification(b, a)

    def test_mismatch(self):
        with pytest.raises(EvaluationError):
            misclassification([1, 1], [1])


class TestWelch:
    def test_matches_quadrature(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 3), size=rng.integers(2, 40))
            y = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 3), size=rng.integers(2, 40))
            r = welch_test(x, y)
            assert abs(r.p_one_sided - t_sf_quadrature(r.t, r.dof)) < 1e-8

    def test_known_values(self):
        # symmetric groups: t = 0, p = 1/2
        r = welch_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert r.t == 0 and r.p_one_sided == pytest.approx(0.5, abs=1e-15)
        r = welch_test([1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 2.0, 3.0])
        assert r.dof == pytest.approx(6.0, rel=1e-14)

    def test_direction(self):
        r = welch_test([5.0, 6.0, 7.0], [1.0, 2.0, 3.0])
        assert r.p_one_sided < 0.01 and r.p_two_sided == pytest.approx(2 * r.p_one_sided)

    def test_t_sf_symmetry(self):
        assert t_sf(1.3, 7.0) + t_sf(-1.3, 7.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("x,y", [([1.0], [1.0, 2.0]), ([1.0, 1.0], [2.0, 2.0])])
    def test_errors(self, x, y):
        with pytest.raises(EvaluationError):
            welch_test(x, y)


def test_evaluate_report(tmp_path):
    d = trial()
    rep = evaluate(d.treatments, d, oracle=d.treatments)
    assert rep.misclassification == 0
    assert '"value"' in rep.to_json()
    write_report_csv(tmp_path / "r.csv", [{"method": "m", "value": rep.value}])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("method,scenario") and lines[1].startswith("m,,,,,")
