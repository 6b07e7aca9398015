import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iorank.errors import AllMissingRow, ParseError, ValidationError
from iorank.io_graph import mat_inf_norm
from iorank.stochastic import (
    FlowMatrix,
    chernoff_success_bound,
    error_threshold,
    monte_carlo,
    monte_carlo_norms,
    observed_counts,
    row_stream,
    sample_observed,
    vanishing_epsilon,
)

UNIFORM = FlowMatrix.uniform(10, 1000)


def test_chernoff_example():
    assert chernoff_success_bound(10, 0.2, 0.1, 1000) == pytest.approx(1 - 200 * math.exp(-12), abs=1e-15)
    assert chernoff_success_bound(10, 0.2, 0.1, 1000) == pytest.approx(0.998771, abs=5e-7)


def test_chernoff_clamps_at_zero():
    assert chernoff_success_bound(10, 0.2, 0.1, 10) == 0.0


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_vanishing_epsilon_bound(n):
    m, zeta = 5000, 0.1
    eps = vanishing_epsilon(n, m, zeta)
    assert chernoff_success_bound(n, eps, zeta, m) == pytest.approx(1 - 2 * n ** (-1 / 3), rel=1e-12)


def test_error_threshold():
    assert error_threshold(0.5, 0.2) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("args", [(10, 0.0, 0.1, 5), (10, 0.2, 1.0, 5), (10, 0.2, 0.1, 0)])
def test_chernoff_rejects_bad_input(args):
    with pytest.raises(ValidationError):
        chernoff_success_bound(*args)


def test_flow_matrix_properties():
    f = FlowMatrix([[0, 3, 1], [2, 0, 2], [5, 5, 0]])
    assert f.m == 1
    np.testing.assert_array_equal(f.ii, [4, 4, 10])
    np.testing.assert_allclose(f.true_matrix().w[0], [0, 0.75, 0.25])


@pytest.mark.parametrize("bad", [
    [[0, 1.5], [1, 0]],
    [[0, -1], [1, 0]],
    [[1, 1], [1, 0]],
    [[0, 0], [1, 0]],
    [[0, 1, 2], [1, 0, 1]],
])
def test_flow_matrix_rejects(bad):
    with pytest.raises(ValidationError):
        FlowMatrix(bad)


def test_flow_matrix_from_dict_forms():
    dense = FlowMatrix.from_dict({"y": [[0, 4], [7, 0]]})
    edges = FlowMatrix.from_dict({"n": 2, "edges": [{"i": 0, "j": 1, "y": 4}, {"i": 1, "j": 0, "y": 7}]})
    np.testing.assert_array_equal(dense.y, edges.y)
    with pytest.raises(ParseError):
        FlowMatrix.from_dict({"n": 2})


def test_sampling_is_reproducible():
    a = sample_observed(UNIFORM, 0.1, seed=7, trial=3)
    b = sample_observed(UNIFORM, 0.1, seed=7, trial=3)
    assert a == b
    assert a != sample_observed(UNIFORM, 0.1, seed=7, trial=4)
    assert a != sample_observed(UNIFORM, 0.1, seed=8, trial=3)


def test_rows_are_independent_of_evaluation_order():
    x, _ = observed_counts(UNIFORM, 0.1, seed=11, trial=2)
    for i in (9, 0, 4):
        np.testing.assert_array_equal(x[i], row_stream(11, 2, i).binomial(UNIFORM.y[i], 0.9))


def test_nothing_missing_returns_truth():
    f = FlowMatrix([[0, 10**6, 5], [3, 0, 8], [1, 1, 0]])
    assert sample_observed(f, 1e-12, seed=1) == f.true_matrix()
    assert monte_carlo(f, 0.5, 1e-12, 0.2, 1.0, 20, 1).empirical_success == 1.0


def test_binomial_moments():
    y, zeta, draws = 1000, 0.1, 100_000
    x = row_stream(3, 0, 0).binomial(np.full(draws, y), 1 - zeta)
    mean, var = (1 - zeta) * y, zeta * (1 - zeta) * y
    assert abs(x.mean() - mean) <= 4 * math.sqrt(var / draws)
    # the sample variance has standard error about var * sqrt(2 / draws)
    assert abs(x.var(ddof=1) - var) <= 4 * var * math.sqrt(2 / draws)


def test_empty_rows_are_redrawn():
    f = FlowMatrix.uniform(4, 1)
    _, resampled = observed_counts(f, 0.8, seed=0)
    assert resampled > 0
    u = sample_observed(f, 0.8, seed=0)
    np.testing.assert_allclose(u.w.sum(axis=1), 1.0)


def test_all_missing_row():
    with pytest.raises(AllMissingRow):
        observed_counts(FlowMatrix.uniform(3, 1), 1 - 1e-9, seed=0)


def test_monte_carlo_smaller_run():
    reports = monte_carlo_norms(UNIFORM, 0.5, 0.1, 0.2, (1.0, 2.0, math.inf), 1500, 5)
    bound = chernoff_success_bound(10, 0.2, 0.1, 1000)
    for r in reports:
        assert r.passes
        assert r.empirical_success >= bound - 3 * math.sqrt(bound * (1 - bound) / 1500)
        assert r.concentration_violations == 0
    # norms of the same error vector shrink with q
    assert reports[2].max_error <= reports[1].max_error <= reports[0].max_error


def test_concentration_event_implies_entrywise_bound():
    # small flows so that the window is often missed and often hit
    f = FlowMatrix([[0, 40, 60], [30, 0, 30], [80, 20, 0]])
    r = monte_carlo(f, 0.5, 0.2, 0.1, 1.0, 400, 2)
    assert 0 < r.concentrated_trials < 400
    assert r.concentration_violations == 0


def test_report_json():
    r = monte_carlo(FlowMatrix.uniform(3, 50), 0.5, 0.1, 0.2, math.inf, 5, 1)
    doc = json.loads(r.to_json())
    assert doc["q"] == "inf"
    for key in ("trials", "epsilon", "zeta", "empirical_success", "bound_probability", "error_threshold", "seed"):
        assert key in doc


def test_report_is_bit_identical():
    a = monte_carlo(FlowMatrix.uniform(5, 200), 0.5, 0.1, 0.2, 2.0, 200, 7).to_json()
    b = monte_carlo(FlowMatrix.uniform(5, 200), 0.5, 0.1, 0.2, 2.0, 200, 7).to_json()
    assert a == b


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(1, 500), st.floats(0.01, 0.5), st.integers(0, 2**63 - 1))
def test_observed_matrix_is_stochastic(n, amount, zeta, seed):
    u = sample_observed(FlowMatrix.uniform(n, amount), zeta, seed)
    np.testing.assert_allclose(u.w.sum(axis=1), 1.0, atol=1e-12)
    assert mat_inf_norm(u.w) == pytest.approx(1.0, abs=1e-12)
