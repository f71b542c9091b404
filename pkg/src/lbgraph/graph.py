"""Weighted proximity graph and its graph Laplacian.

Vertices carry measures ``mu_i``; an edge joins ``x_i`` and ``x_j`` iff
``d(x_i, x_j) < rho`` and carries the weight

    w_ij = c_phi * phi(d_ij / rho) * mu_i * mu_j,

with ``c_phi = 2 / (rho^(n+2) * nu_n * int_0^1 phi(t) t^(n+1) dt)``.  For the
constant kernel this is ``2 (n + 2) / (nu_n rho^(n+2))``.  The Laplacian is

    (Delta u)_i = (1 / mu_i) * sum_j w_ij (u_j - u_i).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import integrate, sparse
from scipy.sparse import csgraph

from .errors import InvalidInputError


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n, ``pi^(n/2) / Gamma(n/2 + 1)``.

    Evaluated by the recurrence ``nu_n = 2 pi / n * nu_{n-2}`` so that
    ``nu_1 = 2`` and ``nu_2 = pi`` are exact.
    """
    if int(n) != n or n < 1:
        raise InvalidInputError("dimension must be a positive integer")
    n = int(n)
    nu = 2.0 if n % 2 else 1.0
    for m in range(2 + n % 2, n + 1, 2):
        nu *= 2.0 * math.pi / m
    return nu


# -- edge kernels -------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """Edge profile ``phi`` on [0, 1], nonnegative and nonincreasing."""

    name: str
    phi: object

    def __call__(self, t):
        return self.phi(np.asarray(t, dtype=float))

    def second_moment(self, n: int) -> float:
        """``int_0^1 phi(t) t^(n+1) dt`` by adaptive quadrature."""
        value, _ = integrate.quad(lambda t: float(self.phi(np.asarray(t))) * t ** (n + 1), 0.0, 1.0,
                                  epsabs=0.0, epsrel=1e-13, limit=200)
        return value


KERNELS = {
    "flat": Kernel("flat", lambda t: np.ones_like(t)),
    "quadratic": Kernel("quadratic", lambda t: 1.0 - t * t),
}


def get_kernel(kernel) -> Kernel | None:
    if kernel is None or isinstance(kernel, Kernel):
        return kernel
    if isinstance(kernel, str):
        try:
            return KERNELS[kernel]
        except KeyError:
            raise InvalidInputError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}") from None
    if callable(kernel):
        k = Kernel(getattr(kernel, "__name__", "custom"), kernel)
        t = np.linspace(0.0, 1.0, 101)
        v = np.asarray(k(t), dtype=float)
        if np.any(v < 0) or np.any(np.diff(v) > 1e-12):
            raise InvalidInputError("kernel must be nonnegative and nonincreasing on [0, 1]")
        return k
    raise InvalidInputError(f"cannot interpret kernel {kernel!r}")


def edge_constant(n: int, rho: float, kernel=None) -> float:
    """Normalisation ``c_phi`` multiplying ``phi(d/rho) mu_i mu_j``."""
    nu = unit_ball_volume(n)
    kernel = get_kernel(kernel)
    if kernel is None:
        return 2.0 * (n + 2) / (nu * rho ** (n + 2))
    return 2.0 / (rho ** (n + 2) * nu * kernel.second_moment(n))


# -- data types ---------------------------------------------------------------

@dataclass
class DistanceMatrixInput:
    """External metric-measure data: distances, vertex weights, dimension, total volume."""

    d: np.ndarray
    mu: np.ndarray
    n: int
    vol_total: float | None = None

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float).ravel()
        N = self.mu.size
        if self.d.shape != (N, N):
            raise InvalidInputError(f"distance matrix must be {N}x{N}, got {self.d.shape}")
        scale = max(1.0, float(np.abs(self.d).max(initial=0.0)))
        if np.abs(self.d - self.d.T).max(initial=0.0) > 1e-12 * scale:
            raise InvalidInputError("distance matrix is not symmetric")
        if np.abs(np.diag(self.d)).max(initial=0.0) > 1e-12 * scale:
            raise InvalidInputError("distance matrix diagonal must be zero")
        if np.any(self.d < 0):
            raise InvalidInputError("distances must be nonnegative")
        if np.any(self.mu <= 0):
            raise InvalidInputError("vertex weights must be positive")
        if self.vol_total is None:
            self.vol_total = float(self.mu.sum())


@dataclass(eq=False)
class ProximityGraph:
    """Vertex-weighted, edge-weighted graph realising the graph Laplacian.

    ``W`` is a symmetric CSR matrix with sorted column indices and an empty
    diagonal; ``mu`` holds the vertex measures.
    """

    mu: np.ndarray
    W: sparse.csr_matrix
    n: int
    rho: float
    kernel: str = "none"
    vol_total: float = field(default=None)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if np.any(self.mu <= 0):
            bad = int(np.flatnonzero(self.mu <= 0)[0])
            raise InvalidInputError(f"vertex {bad} has nonpositive weight")
        if self.vol_total is None:
            self.vol_total = float(self.mu.sum())
        W = sparse.csr_matrix(self.W, dtype=float)
        W.sort_indices()
        self.W = W
        self.degree = np.asarray(W.sum(axis=1)).ravel()
        self.n_components, _ = csgraph.connected_components(W, directed=False)

    @property
    def N(self) -> int:
        return self.mu.size

    @property
    def nu_n(self) -> float:
        return unit_ball_volume(self.n)

    @property
    def connected(self) -> bool:
        return self.n_components == 1

    @property
    def n_edges(self) -> int:
        return int(self.W.nnz // 2)

    def neighbors(self, i):
        lo, hi = self.W.indptr[i], self.W.indptr[i + 1]
        return self.W.indices[lo:hi], self.W.data[lo:hi]

    def edges(self):
        """Undirected edges ``(i, j, w_ij)`` with ``i < j``."""
        coo = sparse.triu(self.W, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    @classmethod
    def from_weights(cls, mu, W, n=1, rho=1.0, kernel="none"):
        """Graph from explicit vertex and (symmetric) edge weights."""
        W = sparse.csr_matrix(W, dtype=float)
        if W.shape != (len(mu), len(mu)):
            raise InvalidInputError("edge weight matrix shape does not match vertex count")
        if abs(W - W.T).max() > 0 or W.diagonal().any():
            raise InvalidInputError("edge weights must be symmetric without self-loops")
        if W.nnz and W.data.min() < 0:
            raise InvalidInputError("edge weights must be nonnegative")
        W.eliminate_zeros()
        return cls(np.asarray(mu, dtype=float), W, n, rho, kernel)

    def operator_norm_bound(self) -> float:
        """Upper bound on ||Delta_Gamma|| in the weighted norm (Gershgorin on the symmetrised matrix)."""
        return float(2.0 * (self.degree / self.mu).max(initial=0.0))


# -- construction -------------------------------------------------------------

def _pairs_below(dist_rows, rho):
    """(i, j, d) for all i != j with d < rho from an iterator of distance row blocks."""
    rows, cols, vals = [], [], []
    for start, block in dist_rows:
        i, j = np.nonzero(block < rho)
        keep = (i + start) != j
        rows.append(i[keep] + start)
        cols.append(j[keep])
        vals.append(block[i[keep], j[keep]])
    if not rows:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _model_rows(model, points, chunk=256):
    for start in range(0, len(points), chunk):
        block = points[start:start + chunk]
        yield start, model.distance(block[:, None, :], points[None, :, :])


def build_proximity_graph(source, rho: float, kernel=None, model=None) -> ProximityGraph:
    """Build the weighted proximity graph on a weighted net or a distance matrix.

    ``source`` is either a :class:`~lbgraph.measure.WeightedNet` (its model is
    used for distances) or a :class:`DistanceMatrixInput`.  ``kernel`` is None
    (constant profile, closed-form constant), a name in :data:`KERNELS`, or a
    callable ``phi``.
    """
    if not rho > 0:
        raise InvalidInputError("rho must be positive")
    kern = get_kernel(kernel)
    if isinstance(source, DistanceMatrixInput):
        mu, n, vol = source.mu, int(source.n), source.vol_total
        i, j, d = _pairs_below([(0, source.d)], rho)
    else:
        model = model or source.model
        if rho >= model.injectivity_radius:
            raise InvalidInputError(f"rho={rho:g} must be below the injectivity radius "
                                    f"{model.injectivity_radius:g}")
        mu, n, vol = np.asarray(source.weights, dtype=float), model.dimension, model.volume
        i, j, d = _pairs_below(_model_rows(model, source.net.points), rho)
    if np.any(mu <= 0):
        bad = int(np.flatnonzero(mu <= 0)[0])
        raise InvalidInputError(f"vertex {bad} has nonpositive weight")
    c = edge_constant(n, rho, kern)
    profile = 1.0 if kern is None else np.asarray(kern(d / rho), dtype=float)
    w = c * profile * (mu[i] * mu[j])  # symmetric product keeps w_ij == w_ji exactly
    N = mu.size
    W = sparse.csr_matrix((w, (i, j)), shape=(N, N))
    W.eliminate_zeros()
    g = ProximityGraph(mu, W, n, float(rho), "none" if kern is None else kern.name, vol)
    if not g.connected:
        warnings.warn(f"proximity graph is disconnected ({g.n_components} components); "
                      "the zero eigenvalue is repeated", RuntimeWarning, stacklevel=2)
    return g


# -- operators ----------------------------------------------------------------

def _check_vec(g, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (g.N,):
        raise InvalidInputError(f"vector of length {g.N} expected, got shape {u.shape}")
    return u


def _row_index(g):
    return np.repeat(np.arange(g.N), np.diff(g.W.indptr))


def apply_laplacian(g: ProximityGraph, u) -> np.ndarray:
    """``(Delta_Gamma u)_i = (1/mu_i) sum_j w_ij (u_j - u_i)``; exactly zero on constants."""
    u = _check_vec(g, u)
    rows = _row_index(g)
    terms = g.W.data * (u[g.W.indices] - u[rows])
    return np.bincount(rows, weights=terms, minlength=g.N) / g.mu


def weighted_inner_product(g: ProximityGraph, u, v) -> float:
    """``<u, v> = sum_i mu_i u_i v_i``."""
    u = _check_vec(g, u)
    v = _check_vec(g, v)
    return float(np.dot(g.mu * u, v))


def weighted_norm(g: ProximityGraph, u) -> float:
    return math.sqrt(weighted_inner_product(g, u, u))


def dirichlet_energy(g: ProximityGraph, u) -> float:
    """``||delta u||^2 = (1/2) sum_{i~j} w_ij (u_i - u_j)^2`` over ordered pairs."""
    u = _check_vec(g, u)
    rows = _row_index(g)
    diff = u[rows] - u[g.W.indices]
    return float(0.5 * np.dot(g.W.data, diff * diff))


def symmetrized_laplacian(g: ProximityGraph) -> sparse.csr_matrix:
    """``D^{-1/2} (Deg - W) D^{-1/2}`` with ``D = diag(mu)``; same spectrum as ``-Delta_Gamma``."""
    s = 1.0 / np.sqrt(g.mu)
    L = sparse.diags(g.degree) - g.W
    S = sparse.diags(s) @ L @ sparse.diags(s)
    S = sparse.csr_matrix(S)
    # exact symmetry: average with the transpose
    return sparse.csr_matrix(0.5 * (S + S.T))
