"""Low spectrum of ``-Delta_Gamma``.

The operator is self-adjoint for ``<u, v> = sum mu_i u_i v_i``.  With
``D = diag(mu)`` the matrix ``S = D^{-1/2} (Deg - W) D^{-1/2}`` is symmetric
positive semidefinite and has the same eigenvalues; eigenvectors map back via
``u = D^{-1/2} v``, which turns Euclidean orthonormality of ``v`` into
weighted orthonormality of ``u``.

The iterative path is a block Lanczos process with full reorthogonalization
and Rayleigh-Ritz extraction.  Block size defaults to ``k`` so eigenvalue
clusters of multiplicity up to ``k`` are resolved from a single random start.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
from scipy import linalg

from .errors import ConvergenceError, InvalidInputError
from .graph import ProximityGraph, symmetrized_laplacian

DENSE_CAP = 3000
DENSE_FALLBACK = 600


@dataclass(eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    tol: float
    method: str
    info: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.eigenvalues.size

    def metadata(self) -> dict:
        return {"method": self.method, "iterations": self.iterations, "tol": self.tol,
                "k": self.k, **self.info}


def _fix_signs(V):
    """Make the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _finish(g, lam, V, S, iterations, tol, method, info=None):
    V = _fix_signs(V)
    res = np.linalg.norm(S @ V - V * lam, axis=0)
    U = V / np.sqrt(g.mu)[:, None]
    return Spectrum(np.asarray(lam, dtype=float), U, res, iterations, tol, method, info or {})


def dense_eigendecomposition(g: ProximityGraph) -> Spectrum:
    """All ``N`` eigenpairs from a dense symmetric eigensolver (validation oracle)."""
    if g.N > DENSE_CAP:
        raise InvalidInputError(f"dense eigendecomposition is capped at N <= {DENSE_CAP}")
    S = symmetrized_laplacian(g)
    lam, V = np.linalg.eigh(S.toarray())
    return _finish(g, lam, V, S, 0, 0.0, "dense")


def _orthonormalize_block(Z, V, m, rng, scale):
    """Orthonormalize ``Z`` against ``V[:, :m]`` and itself; refill collapsed columns randomly."""
    for _ in range(2):
        if m:
            Z -= V[:, :m] @ (V[:, :m].T @ Z)
    Q, R = np.linalg.qr(Z)
    weak = np.abs(np.diag(R)) <= 1e-10 * max(scale, 1.0)
    for c in np.flatnonzero(weak):
        # invariant subspace reached in this direction: continue from a fresh vector
        z = rng.standard_normal(Z.shape[0])
        for _ in range(2):
            if m:
                z -= V[:, :m] @ (V[:, :m].T @ z)
            others = np.delete(Q, c, axis=1)
            z -= others @ (others.T @ z)
        nz = np.linalg.norm(z)
        if nz == 0:
            return Q[:, :0]
        Q[:, c] = z / nz
    return Q


def _grow(A, cols):
    out = np.zeros((A.shape[0], cols))
    out[:, :A.shape[1]] = A
    return out


def smallest_eigenpairs(g: ProximityGraph, k: int, tol: float = 1e-10, max_iter: int | None = None,
                        seed: int = 0, block_size: int | None = None,
                        dense_fallback: int = DENSE_FALLBACK, check_every: int = 4) -> Spectrum:
    """The ``k`` smallest eigenpairs of ``-Delta_Gamma`` by block Lanczos.

    Converged when every Ritz residual satisfies ``||S v - lam v|| <= tol * max(1, lam)``.
    ``max_iter`` counts block steps (default ``10 k + 200``).  When the
    iteration stalls, graphs with ``N <= dense_fallback`` are solved densely;
    larger ones raise :class:`ConvergenceError` carrying the best residuals.
    """
    N = g.N
    if not 1 <= k <= N:
        raise InvalidInputError(f"k must satisfy 1 <= k <= N={N}, got {k}")
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    max_iter = 10 * k + 200 if max_iter is None else int(max_iter)
    S = symmetrized_laplacian(g)
    scale = g.operator_norm_bound()
    b = min(N, block_size or max(k, 1))
    rng = np.random.default_rng(seed)

    cap = min(N, 8 * b)
    V = np.empty((N, cap))
    AV = np.empty((N, cap))
    H = np.zeros((cap, cap))
    Q = _orthonormalize_block(rng.standard_normal((N, b)), V, 0, rng, 1.0)
    m = 0
    steps = 0
    best = None
    while True:
        nb = Q.shape[1]
        if m + nb > cap:
            cap = min(N, max(2 * cap, m + nb))
            V, AV, H = _grow(V, cap), _grow(AV, cap), _grow(_grow(H, cap).T, cap).T
        V[:, m:m + nb] = Q
        AQ = S @ Q
        AV[:, m:m + nb] = AQ
        col = V[:, :m + nb].T @ AQ
        H[:m + nb, m:m + nb] = col
        H[m:m + nb, :m + nb] = col.T
        m += nb
        steps += 1
        exhausted = m >= N
        if exhausted or steps % check_every == 0 or steps >= max_iter:
            Hm = 0.5 * (H[:m, :m] + H[:m, :m].T)
            kk = min(k, m)
            theta, Y = linalg.eigh(Hm, subset_by_index=[0, kk - 1])
            X = V[:, :m] @ Y
            R = AV[:, :m] @ Y - X * theta
            res = np.linalg.norm(R, axis=0)
            if kk == k and (best is None or res.max() < best[2].max()):
                best = (theta, X, res)
            if kk == k and np.all(res <= tol * np.maximum(1.0, theta)):
                return _finish(g, theta, X, S, steps, tol, "block-lanczos",
                               {"block_size": b, "basis_size": m})
            if exhausted or steps >= max_iter:
                break
        # three-term recurrence direction, then full reorthogonalization
        Z = AQ - Q @ (Q.T @ AQ)
        Q = _orthonormalize_block(Z, V, m, rng, scale)
        if Q.shape[1] == 0:
            break
        Q = Q[:, :N - m]
    if N <= dense_fallback:
        full = dense_eigendecomposition(g)
        return Spectrum(full.eigenvalues[:k], full.eigenvectors[:, :k], full.residuals[:k],
                        steps, tol, "dense-fallback", {"block_size": b})
    raise ConvergenceError(
        f"block Lanczos did not converge in {steps} block steps (tol={tol:g})",
        residuals=None if best is None else best[2],
        eigenvalues=None if best is None else best[0],
        iterations=steps,
    )
