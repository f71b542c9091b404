import numpy as np
import pytest
from scipy import sparse

from lbgraph.graph import ProximityGraph
from lbgraph.manifold import Circle
from lbgraph.measure import monte_carlo_voronoi_weights
from lbgraph.net import Net


def random_graph(rng, N, density=0.1, connect=True):
    """Random symmetric nonnegative weights with random positive vertex measures."""
    A = sparse.random(N, N, density=density, random_state=rng, data_rvs=rng.random)
    A = sparse.triu(A, k=1)
    if connect and N > 1:
        ring = sparse.coo_matrix((rng.random(N - 1) + 0.1, (np.arange(N - 1), np.arange(1, N))), shape=(N, N))
        A = A + ring
    W = (A + A.T).tocsr()
    mu = rng.random(N) + 0.05
    return ProximityGraph.from_weights(mu, W)


def two_vertex_graph():
    return ProximityGraph.from_weights(np.ones(2), np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.fixture(scope="session")
def circle_wnet():
    """64 equally spaced circle points with 2e5 quadrature samples."""
    model = Circle()
    net = Net.from_points(model, np.arange(64) * 2 * np.pi / 64, seed=0)
    return monte_carlo_voronoi_weights(model, net, 200_000, 7)
