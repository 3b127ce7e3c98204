import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import graphs
from dbgnn.dirac import (NumericFailure, assemble, eigendecompose, jacobi_eigh, residuals,
                         verify_spectral_claims)
from dbgnn.graph import incidence, laplacian, make_path, make_random_connected, one_down_laplacian


def test_two_by_two_block_closed_form():
    # [[beta, b], [b, -beta]] has eigenvalues +-sqrt(b^2 + beta^2)
    w, v = jacobi_eigh(np.array([[0.5, 1.0], [1.0, -0.5]]))
    np.testing.assert_allclose(w, [-np.sqrt(1.25), np.sqrt(1.25)], atol=1e-12)
    w, _ = jacobi_eigh(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(w, [-1, 1], atol=1e-12)


def test_single_edge_graph():
    # two nodes + one edge: the symmetric node mode decouples at +beta, the
    # antisymmetric one couples to the edge with weight sqrt(2) -> +-sqrt(2 b^2 + beta^2)
    g = make_path(2)
    op = assemble(g, 1.0, 0.5)
    np.testing.assert_array_equal(op.matrix, [[0.5, 0, 1], [0, 0.5, -1], [1, -1, -0.5]])
    spec = eigendecompose(op)
    np.testing.assert_allclose(spec.eigenvalues, [-1.5, 0.5, 1.5], atol=1e-12)
    rep = verify_spectral_claims(spec, 0.5, 2, 1)
    assert (rep.pos_count, rep.neg_count, rep.gap_holds) == (2, 1, True)
    assert abs(rep.min_abs_nonkernel - 0.5) < 1e-12
    w0 = eigendecompose(assemble(g, 1.0, 0.0)).eigenvalues
    np.testing.assert_allclose(w0, [-np.sqrt(2), 0, np.sqrt(2)], atol=1e-12)


def test_p3_symmetric_spectrum_against_charpoly():
    op = assemble(make_path(3), 1.0, 0.0)
    assert op.matrix.shape == (5, 5)
    np.testing.assert_array_equal(np.diag(op.matrix), 0)
    np.testing.assert_array_equal(op.matrix, op.matrix.T)
    w = eigendecompose(op).eigenvalues
    roots = np.sort(np.roots(np.poly(op.matrix)).real)
    np.testing.assert_allclose(w, roots, atol=1e-7)
    nz = w[np.abs(w) > 1e-9]
    np.testing.assert_allclose(np.sort(nz), np.sort(-nz), atol=1e-10)


def test_massless_square_is_block_laplacian():
    g = make_random_connected(9, 0.3, np.random.default_rng(2))
    b, n, m = 1.7, g.num_nodes, g.num_edges
    sq = assemble(g, b, 0.0).matrix @ assemble(g, b, 0.0).matrix
    expect = np.zeros((n + m, n + m))
    expect[:n, :n] = laplacian(g)
    expect[n:, n:] = one_down_laplacian(g)
    assert np.max(np.abs(sq - b * b * expect)) < 1e-10


def test_pure_mass_gap():
    g = make_path(5)
    spec = eigendecompose(assemble(g, 0.0, 2.0))
    assert np.min(np.abs(spec.eigenvalues)) == 2.0


@pytest.mark.parametrize("seed", range(10))
def test_gap_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    g = make_random_connected(int(rng.integers(3, 21)), 0.2, rng)
    op = assemble(g, 1.0, 0.3)
    spec = eigendecompose(op)
    assert verify_spectral_claims(spec, 0.3, g.num_nodes, g.num_edges).gap_holds
    assert residuals(op, spec).max() < 1e-8
    v = spec.eigenvectors
    assert np.max(np.abs(v.T @ v - np.eye(v.shape[0]))) < 1e-8
    np.testing.assert_allclose(spec.eigenvalues, np.linalg.eigvalsh(op.matrix), atol=1e-9)


@given(graphs(), st.floats(-2, 2), st.floats(-2, 2))
def test_trace_formula(g, b, beta):
    op = assemble(g, b, beta)
    assert abs(np.trace(op.matrix) - beta * (g.num_nodes - g.num_edges)) < 1e-12 * (1 + abs(beta) * op.matrix.shape[0])


def test_spectrum_invariant_under_relabeling():
    rng = np.random.default_rng(3)
    g = make_random_connected(10, 0.3, rng)
    h = g.relabel(rng.permutation(g.num_nodes))
    a = eigendecompose(assemble(g, 1.0, 0.4)).eigenvalues
    c = eigendecompose(assemble(h, 1.0, 0.4)).eigenvalues
    np.testing.assert_allclose(a, c, atol=1e-9)


def test_massless_counts_exclude_kernel():
    g = make_path(4)
    spec = eigendecompose(assemble(g, 1.0, 0.0))
    rep = verify_spectral_claims(spec, 0.0, g.num_nodes, g.num_edges)
    # tree: kernel is the constant node mode only
    assert rep.zero_count == 1 and rep.pos_count == rep.neg_count == 3


def test_jacobi_rejects_bad_input():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        jacobi_eigh(np.eye(4), max_size=3)


def test_jacobi_nonconvergence_reported():
    a = np.random.default_rng(0).normal(size=(12, 12))
    with pytest.raises(NumericFailure):
        jacobi_eigh(a + a.T, max_sweeps=1)


def test_incidence_block_placement():
    g = make_path(3)
    op = assemble(g, 2.0, 0.0).matrix
    np.testing.assert_array_equal(op[:3, 3:], 2.0 * incidence(g).toarray())
