"""Maps between functions on the manifold and functions on the net.

Every integral here is taken against the empirical measure of the weighted
net's quadrature samples (sample ``s`` at ``y_s`` with mass ``m_s``, assigned
to cell ``a_s``).  Because cells, weights and kernel sums all come from that
one sample set, the following hold up to rounding:

* ``P`` maps constants to the same constants;
* ``<f, P* u>`` equals ``<P f, u>_X`` and ``||P* u|| = ||u||_X``;
* the normalised smoothing ``Lambda_r`` and ``I`` reproduce constants.

The smoothing kernel is ``psi(t) = (n + 2) / (2 nu_n) * (1 - t^2)`` on
``[0, 1]``, zero beyond, with ``k_r(x, y) = r^-n psi(d(x, y) / r)``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import sparse

from . import _search
from .errors import InvalidInputError, KernelSupportError
from .graph import unit_ball_volume

PAIR_BUDGET = 2_000_000


@dataclass(frozen=True)
class KernelParams:
    n: int
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidInputError(f"kernel radius must be positive, got {self.r}")


def kernel_psi(n: int, t):
    """``psi(t)``; scalar in, scalar out."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise InvalidInputError("psi is defined for t >= 0")
    c = (n + 2) / (2.0 * unit_ball_volume(n))
    out = np.where(arr < 1.0, c * (1.0 - arr * arr), 0.0)
    return float(out) if out.ndim == 0 else out


# -- function containers -------------------------------------------------------

@dataclass(eq=False)
class DiscreteFunction:
    """Values ``u(x_i)`` on the vertices of a weighted net."""

    values: np.ndarray
    wnet: object

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.wnet.N:
            raise InvalidInputError(f"expected {self.wnet.N} values, got {self.values.shape[0]}")

    def norm(self) -> float:
        """``||u||_X = sqrt(sum mu_i u_i^2)``."""
        return math.sqrt(float(np.dot(self.wnet.weights, self.values ** 2)))

    def inner(self, other) -> float:
        return float(np.dot(self.wnet.weights * self.values, _values(other)))

    def to_dict(self):
        return {"N": self.wnet.N, "values": self.values.tolist()}


class FieldFunction:
    """Pointwise-evaluable function on a manifold model."""

    def __init__(self, model, fn, name: str = "field"):
        self.model = model
        self.fn = fn
        self.name = name

    def __call__(self, x):
        pts = self.model.check_points(x)
        return np.asarray(self.fn(pts), dtype=float)

    def at_samples(self, wnet) -> np.ndarray:
        return self(wnet.samples)


class PiecewiseConstant(FieldFunction):
    """``P* u``: constant ``u_i`` on the empirical Voronoi cell of ``x_i``."""

    def __init__(self, wnet, values):
        self.wnet = wnet
        self.values = np.asarray(values, dtype=float)
        self._tree = None
        super().__init__(wnet.model, self._evaluate, "extension")

    def _evaluate(self, pts):
        if self._tree is None:
            self._tree = _search.build_tree(self.wnet.model, self.wnet.points)
        idx, _ = _search.nearest(self.wnet.model, self._tree, self.wnet.points, pts)
        return self.values[idx]

    def at_samples(self, wnet) -> np.ndarray:
        if wnet is self.wnet:
            return self.values[wnet.assignment]
        return super().at_samples(wnet)


class Interpolant(FieldFunction):
    """``Lambda_r`` applied to a function known on the quadrature samples."""

    def __init__(self, wnet, sample_values, r):
        self.wnet = wnet
        self.sample_values = sample_values
        self.r = float(r)
        super().__init__(wnet.model, self._evaluate, "interpolant")

    def _evaluate(self, pts):
        vals = np.asarray(self.sample_values, dtype=float)
        ref = vals[0]
        num, den = kernel_sums(self.wnet, pts, self.r, vals - ref)
        _check_support(den, pts)
        return ref + num / (den if num.ndim == 1 else den[:, None])


def _values(u):
    return u.values if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)


def _sample_values(wnet, f):
    if isinstance(f, FieldFunction):
        v = f.at_samples(wnet)
    elif callable(f):
        v = np.asarray(f(wnet.samples), dtype=float)
    else:
        v = np.asarray(f, dtype=float)
    if v.shape[0] != wnet.S:
        raise InvalidInputError("field values must have one entry per sample")
    return v


def _check_support(den, pts):
    bad = np.flatnonzero(den <= 0)
    if bad.size:
        raise KernelSupportError(f"kernel support empty at {bad.size} point(s), first at {pts[bad[0]]}")


# -- empirical integrals -------------------------------------------------------

def empirical_inner(wnet, f, g) -> float:
    """``sum_s m_s f(y_s) g(y_s)`` over the shared quadrature."""
    a = _sample_values(wnet, f)
    b = _sample_values(wnet, g)
    return float(np.dot(wnet.sample_mass * a, b))


def empirical_norm(wnet, f) -> float:
    return math.sqrt(empirical_inner(wnet, f, f))


# -- P and P* ------------------------------------------------------------------

def discretize(wnet, f) -> DiscreteFunction:
    """``Pf``: mass-weighted mean of ``f`` over each cell's samples."""
    v = _sample_values(wnet, f)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("field is not finite at every quadrature sample")
    mass = wnet.cell_masses()
    # offsets from a reference value keep constants exact under rounding
    ref = v[0] if v.size else 0.0
    sums = np.bincount(wnet.assignment, weights=wnet.sample_mass * (v - ref), minlength=wnet.N)
    return DiscreteFunction(ref + sums / mass, wnet)


def extend(wnet, u) -> PiecewiseConstant:
    """``P* u``; exact stored cells on the quadrature, nearest vertex elsewhere."""
    vals = _values(u)
    if vals.shape != (wnet.N,):
        raise InvalidInputError(f"expected {wnet.N} values")
    return PiecewiseConstant(wnet, vals)


# -- smoothing -------------------------------------------------------------------

def kernel_sums(wnet, x, r, sample_values=None):
    """``(sum_s m_s v_s k_r(x, y_s), sum_s m_s k_r(x, y_s))`` at each point of ``x``.

    ``sample_values`` may be None (only the denominator), shape ``(S,)`` or
    ``(S, m)``.  Accumulation order is fixed, so results are reproducible.
    """
    model = wnet.model
    pts = model.check_points(x)
    M = len(pts)
    n = model.dimension
    vals = None if sample_values is None else np.asarray(sample_values, dtype=float)
    flat = vals is not None and vals.ndim == 1
    if vals is not None and flat:
        vals = vals[:, None]
    den = np.zeros(M)
    num = None if vals is None else np.zeros((M, vals.shape[1]))
    per_query = wnet.S * unit_ball_volume(n) * r ** n / model.volume
    chunk = max(1, min(4096, int(PAIR_BUDGET / max(per_query, 1.0))))
    scale = r ** -n
    mass = wnet.sample_mass
    for rows, cols, d in _search.ball_pairs(model, wnet.sample_tree, wnet.samples, pts, r,
                                            closed=False, query_chunk=chunk):
        if rows.size == 0:
            continue
        lo = int(rows.min())
        local = rows - lo
        span = int(local.max()) + 1
        kw = mass[cols] * (scale * kernel_psi(n, d / r))
        den[lo:lo + span] += np.bincount(local, weights=kw, minlength=span)
        if vals is not None:
            K = sparse.csr_matrix((kw, (local, cols)), shape=(span, wnet.S))
            num[lo:lo + span] += K @ vals
    if num is not None and flat:
        num = num[:, 0]
    return num, den


def theta(wnet, params, x):
    """``theta = Lambda^0_r(1)``; raises when no sample lies within ``r`` of a point."""
    r = params.r if isinstance(params, KernelParams) else float(params)
    if not r > 0:
        raise InvalidInputError("r must be positive")
    single = np.ndim(x) == 0 or (np.ndim(x) == 1 and wnet.model.coord_dim > 1)
    pts = wnet.model.check_points(np.atleast_1d(x))
    _, den = kernel_sums(wnet, pts, r)
    _check_support(den, pts)
    return float(den[0]) if single else den


def smoothen(wnet, f, r) -> Interpolant:
    """``Lambda_r f = Lambda^0_r f / theta`` with both sums over the shared quadrature."""
    if not r > 0:
        raise InvalidInputError("r must be positive")
    return Interpolant(wnet, _sample_values(wnet, f), r)


def interpolate(wnet, u, rho: float, epsilon: float) -> Interpolant:
    """``I u = Lambda_{rho - 2 epsilon} P* u``.

    ``u`` may be a :class:`DiscreteFunction`, a length-``N`` array, or an
    ``(N, m)`` array whose columns are interpolated together.
    """
    r = rho - 2.0 * epsilon
    if not r > 0:
        raise InvalidInputError(f"rho - 2 epsilon must be positive, got {r:g}")
    vals = _values(u)
    if vals.shape[0] != wnet.N:
        raise InvalidInputError(f"expected {wnet.N} rows")
    return Interpolant(wnet, vals[wnet.assignment], r)


# -- dispersion ------------------------------------------------------------------

def dispersion(model, f, r: float, sample_count: int, seed: int):
    """Monte Carlo ``E_r(f) = int int_{d(x, y) <= r} |f(y) - f(x)|^2 dy dx``.

    One uniform pool of ``S`` points serves as both outer and inner samples;
    the estimate is the U-statistic ``vol^2 / (S (S - 1)) * sum_{s != t}``.
    If ``f`` returns an ``(S, m)`` array, the ``m`` functions share the pool
    and an array of ``m`` estimates is returned.
    """
    if sample_count < 1000:
        raise InvalidInputError("sample_count must be at least 1000")
    if not r > 0:
        raise InvalidInputError("r must be positive")
    pool = model.sample(int(sample_count), seed)
    fv = np.asarray(f(pool), dtype=float)
    flat = fv.ndim == 1
    fv = fv.reshape(len(pool), -1)
    tree = _search.build_tree(model, pool)
    per_query = sample_count * unit_ball_volume(model.dimension) * r ** model.dimension / model.volume
    chunk = max(1, min(4096, int(PAIR_BUDGET / max(per_query, 1.0))))
    total = np.zeros(fv.shape[1])
    for rows, cols, _ in _search.ball_pairs(model, tree, pool, pool, r, closed=True, query_chunk=chunk):
        diff = fv[rows] - fv[cols]
        total += np.einsum("ij,ij->j", diff, diff)
    S = float(sample_count)
    out = model.volume ** 2 * total / (S * (S - 1.0))
    return float(out[0]) if flat else out
