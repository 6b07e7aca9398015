import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iorank import constructions as cons
from iorank.errors import NoConvergence, SelfLoopOnly, ValidationError
from iorank.influence import (
    FirmGoodNetwork,
    default_cap,
    firm_scores,
    from_link_graph,
    influence_direct,
    influence_power,
    leontief_inverse,
    steady_state_map,
)
from iorank.io_graph import validate

SWAP = validate([[0.0, 1.0], [1.0, 0.0]])
seeds = st.integers(0, 2**32 - 1)


def _random(n, seed):
    return cons.random_io_matrix(n, np.random.default_rng(seed))


def test_leontief_swap_closed_form():
    expected = np.array([[1.0, 0.5], [0.5, 1.0]]) / 0.75
    np.testing.assert_allclose(leontief_inverse(SWAP, 0.5), expected, atol=1e-14)


def test_leontief_figure1_gives_influence():
    w = cons.figure1().w
    v = 0.5 / 6 * leontief_inverse(w, 0.5) @ np.ones(6)
    np.testing.assert_allclose(v, [1 / 3, 1 / 3, 1 / 12, 1 / 12, 1 / 12, 1 / 12], atol=1e-12)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_leontief_multiplies_back(alpha):
    w = _random(7, 3)
    lw = leontief_inverse(w, alpha)
    a = np.eye(7) - (1 - alpha) * w.w.T
    assert np.abs(lw @ a - np.eye(7)).sum(axis=1).max() <= 1e-9


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_direct_figure1(alpha):
    res = influence_direct(cons.figure1().w, alpha)
    a = alpha
    np.testing.assert_allclose(res.v, [0.5 - a / 3, 0.5 - a / 3] + [a / 6] * 4, atol=1e-10)
    assert res.method == "direct"
    assert res.iterations == 0


@pytest.mark.parametrize("alpha", [0.05, 0.5, 0.95])
def test_two_firms_split_evenly(alpha):
    np.testing.assert_allclose(influence_direct(SWAP, alpha).v, [0.5, 0.5], atol=1e-15)


def test_star_four_firms():
    v = influence_direct(cons.star(4).w, 0.5).v
    assert v[0] == pytest.approx(5 / 12, abs=1e-12)
    np.testing.assert_allclose(v[1:], 7 / 36, atol=1e-12)


def test_direct_validates_raw_arrays():
    with pytest.raises(ValidationError):
        influence_direct([[0, 0.5], [0.5, 0]], 0.5)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, float("nan")])
def test_alpha_must_be_open_unit(alpha):
    with pytest.raises(ValidationError):
        influence_direct(SWAP, alpha)


def test_result_json_shape():
    doc = influence_direct(SWAP, 0.5).to_dict()
    assert set(doc) == {"v", "method", "iterations", "residual"}


def test_power_figure1():
    w = cons.figure1().w
    res = influence_power(w, 0.5, tol=1e-12)
    assert np.abs(res.v - influence_direct(w, 0.5).v).sum() <= 1e-11
    assert res.method == "power"


def test_power_returns_fixed_point_immediately():
    # the uniform start is the exact answer for the swap matrix
    res = influence_power(SWAP, 0.3)
    assert res.iterations == 1
    assert res.residual == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_power_iteration_count(seed):
    res = influence_power(_random(12, seed), 0.5, tol=1e-12)
    assert res.iterations <= math.ceil(math.log(1e-12) / math.log(0.5)) + 2


def test_power_cap():
    with pytest.raises(NoConvergence):
        influence_power(_random(8, 1), 0.1, tol=1e-12, cap=3)


def test_default_cap_covers_contraction():
    assert default_cap(0.5, 1e-12, margin=0) == math.ceil(math.log(5e-13) / math.log(0.5))


def test_link_graph_dangling_pair():
    w = from_link_graph([[0, 1], [0, 0]])
    np.testing.assert_array_equal(w.w, [[0, 1], [1, 0]])


def test_link_graph_uniform_out_links():
    adj = np.zeros((4, 4))
    adj[0, 1:] = 1
    w = from_link_graph(adj)
    np.testing.assert_allclose(w.w[0], [0, 1 / 3, 1 / 3, 1 / 3])
    # leaves dangle, so each spreads over the other three vertices
    for i in range(1, 4):
        expected = np.full(4, 1 / 3)
        expected[i] = 0
        np.testing.assert_allclose(w.w[i], expected)


def test_link_graph_weighted_and_self_loops():
    adj = [[2, 1, 3], [0, 0, 5], [4, 0, 0]]
    w = from_link_graph(adj, weighted=True)
    np.testing.assert_allclose(w.w[0], [0, 0.25, 0.75])
    with pytest.raises(SelfLoopOnly):
        from_link_graph([[1, 0], [1, 0]], weighted=True)


def test_scores_single_good_per_firm():
    w = _random(5, 9)
    net = FirmGoodNetwork(tuple((f, "g") for f in "abcde"), w.w)
    scores = firm_scores(net, 0.4)
    np.testing.assert_allclose([scores[f] for f in "abcde"], influence_direct(w, 0.4).v, atol=1e-14)


def test_scores_single_firm():
    crit = np.ones((3, 3))
    net = FirmGoodNetwork((("only", 1), ("only", 2), ("only", 3)), crit)
    assert firm_scores(net, 0.5) == {"only": pytest.approx(1.0, abs=1e-12)}


def test_scores_against_markov_chain():
    # firm A makes two goods, B and C one each
    crit = np.array([
        [0.0, 1.0, 2.0, 1.0],
        [1.0, 0.0, 2.0, 1.0],
        [1.0, 1.0, 0.0, 3.0],
        [2.0, 2.0, 1.0, 0.0],
    ])
    net = FirmGoodNetwork((("A", "x"), ("A", "y"), ("B", "z"), ("C", "z")), crit)
    alpha = 0.3
    w = crit / crit.sum(axis=1, keepdims=True)
    # walk: teleport uniformly with prob alpha, else follow w
    t = alpha / 4 + (1 - alpha) * w
    vals, vecs = np.linalg.eig(t.T)
    pi = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    pi /= pi.sum()
    scores = firm_scores(net, alpha)
    assert scores["A"] == pytest.approx(pi[0] + pi[1], abs=1e-12)
    assert scores["B"] == pytest.approx(pi[2], abs=1e-12)
    assert sum(scores.values()) == pytest.approx(1.0, abs=1e-9)


def test_firm_good_network_from_mapping():
    net = FirmGoodNetwork.from_mapping([("a", 0), ("b", 0)], {(0, 1): 2.0, (1, 0): 5.0})
    np.testing.assert_array_equal(net.linkage().w, [[0, 1], [1, 0]])
    assert net.firms == ["a", "b"]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.sampled_from([0.1, 0.5, 0.9]), seeds)
def test_influence_invariants(n, alpha, seed):
    w = _random(n, seed)
    v = influence_direct(w, alpha).v
    assert np.all(v > 0)
    assert v.sum() == pytest.approx(1.0, abs=1e-9)
    assert v.min() >= alpha / n - 1e-9
    assert v.max() <= cons.max_coefficient(n, alpha) + 1e-9
    assert np.abs(steady_state_map(w, alpha, v) - v).max() <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 15), st.floats(0.05, 0.95), seeds)
def test_direct_and_power_agree(n, alpha, seed):
    w = _random(n, seed)
    diff = influence_power(w, alpha, tol=1e-12).v - influence_direct(w, alpha).v
    assert np.abs(diff).sum() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(1, 3), st.floats(0.05, 0.95), seeds)
def test_scores_conserve_mass(firms, goods, alpha, seed):
    rng = np.random.default_rng(seed)
    verts = [(f, g) for f in range(firms) for g in range(goods)]
    n = len(verts)
    if n < 2:
        return
    crit = rng.random((n, n)) + 0.01
    scores = firm_scores(FirmGoodNetwork(tuple(verts), crit), alpha)
    assert sum(scores.values()) == pytest.approx(1.0, abs=1e-9)
