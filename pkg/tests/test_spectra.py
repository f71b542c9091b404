import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import sparse

from conftest import random_graph, two_vertex_graph
from lbgraph.errors import ConvergenceError, InvalidInputError
from lbgraph.graph import (ProximityGraph, apply_laplacian, build_proximity_graph, dirichlet_energy,
                           weighted_inner_product)
from lbgraph.manifold import Circle
from lbgraph.measure import monte_carlo_voronoi_weights
from lbgraph.net import farthest_point_sample
from lbgraph.spectra import dense_eigendecomposition, smallest_eigenpairs


def weighted_gram(g, U):
    return U.T @ (g.mu[:, None] * U)


def test_two_vertex_spectrum():
    g = two_vertex_graph()
    assert_allclose(smallest_eigenpairs(g, 2).eigenvalues, [0.0, 2.0], atol=1e-14)
    assert_allclose(dense_eigendecomposition(g).eigenvalues, [0.0, 2.0], atol=1e-14)


def test_connected_graph_ground_state_is_constant():
    g = random_graph(np.random.default_rng(0), 150)
    spec = smallest_eigenpairs(g, 1)
    assert abs(spec.eigenvalues[0]) <= 1e-10
    u = spec.eigenvectors[:, 0]
    assert_allclose(u / u.mean(), 1.0, atol=1e-8)
    assert u.max() > 0


@pytest.mark.parametrize("seed", range(6))
def test_lanczos_matches_dense(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(20, 500))
    g = random_graph(rng, N, density=min(0.5, 8 / N), connect=seed % 3 != 0)
    k = int(rng.integers(1, min(N, 12) + 1))
    it = smallest_eigenpairs(g, k, seed=seed)
    dense = dense_eigendecomposition(g)
    assert_allclose(it.eigenvalues, dense.eigenvalues[:k], rtol=0, atol=1e-8 * max(1.0, dense.eigenvalues[k - 1]))


@pytest.mark.parametrize("seed", range(4))
def test_spectrum_invariants(seed):
    rng = np.random.default_rng(seed + 10)
    g = random_graph(rng, 300, density=0.03)
    k = 8
    spec = smallest_eigenpairs(g, k, tol=1e-10)
    lam = spec.eigenvalues
    assert np.all(np.diff(lam) >= 0)
    assert lam.min() >= -1e-10 * g.operator_norm_bound()
    assert_allclose(weighted_gram(g, spec.eigenvectors), np.eye(k), atol=1e-10)
    assert np.all(spec.residuals <= 1e-10 * np.maximum(1.0, lam))
    for i in range(k):
        u = spec.eigenvectors[:, i]
        r = -apply_laplacian(g, u) - lam[i] * u
        # weighted-norm residual of the original operator equals the reported one
        assert_allclose(np.sqrt(weighted_inner_product(g, r, r)), spec.residuals[i], rtol=1e-3, atol=1e-12)


def test_dense_trace_identity():
    g = random_graph(np.random.default_rng(4), 200)
    dense = dense_eigendecomposition(g)
    assert_allclose(dense.eigenvalues.sum(), np.sum(g.degree / g.mu), rtol=1e-9)
    assert_allclose(weighted_gram(g, dense.eigenvectors), np.eye(g.N), atol=1e-10)


def test_determinism():
    g = random_graph(np.random.default_rng(6), 250)
    a = smallest_eigenpairs(g, 6, seed=3)
    b = smallest_eigenpairs(g, 6, seed=3)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    np.testing.assert_array_equal(a.eigenvectors, b.eigenvectors)


@pytest.mark.parametrize("seed", range(4))
def test_minimax_consistency(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(3, 50))
    g = random_graph(rng, N, density=0.2)
    dense = dense_eigendecomposition(g)
    for k in range(1, N + 1):
        U = dense.eigenvectors[:, :k]
        # max Rayleigh quotient over span(U) is the top eigenvalue of the projected pencil
        A = np.array([[-weighted_inner_product(g, apply_laplacian(g, a), b) for b in U.T] for a in U.T])
        top = np.linalg.eigvalsh(0.5 * (A + A.T))[-1]
        assert_allclose(top, dense.eigenvalues[k - 1], rtol=1e-9, atol=1e-12)
        u = U[:, -1]
        assert_allclose(dirichlet_energy(g, u) / weighted_inner_product(g, u, u), dense.eigenvalues[k - 1],
                        rtol=1e-9, atol=1e-12)


def test_repeated_eigenvalues_resolved():
    # cycle graph: every nonzero eigenvalue is double
    N = 60
    i = np.arange(N)
    W = sparse.coo_matrix((np.ones(N), (i, (i + 1) % N)), shape=(N, N))
    g = ProximityGraph.from_weights(np.ones(N), (W + W.T).tocsr())
    spec = smallest_eigenpairs(g, 7)
    exact = np.sort(2 - 2 * np.cos(2 * np.pi * i / N))[:7]
    assert_allclose(spec.eigenvalues, exact, atol=1e-12)


def test_circle_pipeline_graph():
    model = Circle()
    net = farthest_point_sample(model, 1500, 0)
    w = monte_carlo_voronoi_weights(model, net, 10**6, 1)
    spec = smallest_eigenpairs(build_proximity_graph(w, 0.12), 3)
    assert_allclose(spec.eigenvalues[1:], 1.0, rtol=0.1)


def test_validation():
    g = two_vertex_graph()
    with pytest.raises(InvalidInputError):
        smallest_eigenpairs(g, 3)
    with pytest.raises(InvalidInputError):
        smallest_eigenpairs(g, 0)
    with pytest.raises(InvalidInputError):
        smallest_eigenpairs(g, 1, tol=0.0)


def test_nonconvergence_reports_residuals():
    g = random_graph(np.random.default_rng(2), 700, density=0.01)
    with pytest.raises(ConvergenceError) as info:
        smallest_eigenpairs(g, 4, tol=1e-30, max_iter=3, check_every=1)
    err = info.value
    assert err.iterations == 3
    assert err.residuals is not None and len(err.residuals) == 4


def test_small_graph_falls_back_to_dense():
    g = random_graph(np.random.default_rng(2), 200, density=0.05)
    spec = smallest_eigenpairs(g, 4, tol=1e-30, max_iter=2)
    assert spec.method == "dense-fallback"
    assert_allclose(spec.eigenvalues, dense_eigendecomposition(g).eigenvalues[:4])


def test_dense_cap():
    big = ProximityGraph.from_weights(np.ones(3001), sparse.csr_matrix((3001, 3001)))
    with pytest.raises(InvalidInputError):
        dense_eigendecomposition(big)
