import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import graphs
from dbgnn import metrics
from dbgnn.graph import Graph, make_path, make_random_connected
from oracles import dirichlet_pairs


def test_dirichlet_spot_values():
    g = make_path(3)
    x = np.array([0.0, 1.0, 0.0])
    assert abs(metrics.dirichlet_trace(g, x) - 2.0) < 1e-12
    assert abs(metrics.dirichlet_edges(g, x) - 2.0) < 1e-12
    assert metrics.dirichlet_edges(make_path(2), [1.0, 0.0]) == 1.0
    assert metrics.dirichlet_trace(g, np.ones((3, 4))) == 0.0
    assert metrics.dirichlet_edges(Graph(2, ()), [3.0, -1.0]) == 0.0


def test_one_hot_gives_degree():
    g = make_random_connected(12, 0.3, np.random.default_rng(0))
    for v in range(g.num_nodes):
        x = np.zeros(g.num_nodes)
        x[v] = 1.0
        assert abs(metrics.dirichlet_trace(g, x) - g.degrees[v]) < 1e-12


def test_zero_embedding_is_degenerate():
    g = make_path(4)
    assert metrics.dirichlet_trace(g, np.zeros((4, 2))) == 0.0
    s = metrics.dirichlet_series(g, [np.zeros((4, 2)), np.eye(4)[:, :2]])
    np.testing.assert_array_equal(s.degenerate, [True, False])


@given(graphs(max_nodes=15), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_forms_agree(g, d, seed):
    x = np.random.default_rng(seed).normal(size=(g.num_nodes, d))
    a, b = metrics.dirichlet_trace(g, x), metrics.dirichlet_edges(g, x)
    assert abs(a - b) < 1e-10 * max(1.0, a)
    assert abs(b - dirichlet_pairs(g.num_nodes, g.undirected_edges, x)) < 1e-10 * max(1.0, b)


@given(graphs(max_nodes=12), st.floats(0.01, 100), st.integers(0, 2**31 - 1))
def test_scale_and_relabel_invariance(g, c, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(g.num_nodes, 2))
    base = metrics.dirichlet_edges(g, x)
    assert abs(metrics.dirichlet_edges(g, -c * x) - base) < 1e-10 * max(1.0, base)
    perm = rng.permutation(g.num_nodes)
    h = g.relabel(perm)
    y = np.empty_like(x)
    y[perm] = x
    assert abs(metrics.dirichlet_edges(h, y) - base) < 1e-10 * max(1.0, base)


def test_r_squared():
    t = np.array([1.0, 2.0, 3.0])
    assert metrics.r_squared(t, t) == 1.0
    assert metrics.r_squared(np.full(3, t.mean()), t) == 0.0
    assert metrics.r_squared([3.0, 2.0, 1.0], t) == -3.0
    with pytest.raises(ValueError):
        metrics.r_squared([1.0, 1.0], [2.0, 2.0])
    with pytest.raises(ValueError):
        metrics.r_squared([1.0], [2.0])


def test_mae():
    assert metrics.mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert metrics.mae([0.0, 0.0], [1.0, -1.0]) == 1.0
    rng = np.random.default_rng(0)
    p, t = rng.normal(size=50), rng.normal(size=50)
    assert abs(metrics.mae(p, t) - sum(abs(a - b) for a, b in zip(p, t)) / 50) < 1e-14
    with pytest.raises(ValueError):
        metrics.mae([], [])


def test_front_arrival():
    act = np.array([[1.0, 0.0, 0.0], [0.5, 0.2, 0.0], [0.1, 0.5, 0.005]])
    np.testing.assert_array_equal(metrics.front_arrival(act, 0.01), [0, 1, metrics.NOT_REACHED])
    np.testing.assert_array_equal(metrics.front_arrival(np.zeros((4, 3)), 0.01), [-1, -1, -1])
    with pytest.raises(ValueError):
        metrics.front_arrival(act, 1.0)


def test_arrival_slope_recovers_power_law():
    d = np.arange(1, 30)
    assert abs(metrics.arrival_slope(np.round(3 * d ** 2), d) - 2.0) < 0.01
    assert abs(metrics.arrival_slope(5 * d, d) - 1.0) < 1e-10
    assert np.isnan(metrics.arrival_slope([0, 1, -1], [0, 1, 2]))
    assert np.isnan(metrics.arrival_slope([4, 5, 6], [3, 3, 3]))
