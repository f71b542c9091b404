"""Epsilon-nets: greedy farthest-point construction and covering/separation estimates."""
from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np

from . import _search
from .errors import InvalidInputError
from .graph import unit_ball_volume

POOL_FACTOR = 50


@dataclass(frozen=True, eq=False)
class Net:
    """Finite point set on a manifold with its covering and separation radii."""

    model: object
    points: np.ndarray
    epsilon_estimate: float
    separation: float
    seed: int | None = None

    def __post_init__(self):
        if len(self.points) < 1:
            raise InvalidInputError("a net needs at least one point")

    @property
    def size(self) -> int:
        return len(self.points)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return (isinstance(other, Net) and self.model == other.model
                and np.array_equal(self.points, other.points)
                and self.epsilon_estimate == other.epsilon_estimate
                and self.separation == other.separation and self.seed == other.seed)

    @classmethod
    def from_points(cls, model, points, epsilon_estimate=None, seed=None, probe_count=10**4):
        """Wrap arbitrary points; the covering radius is probed if not supplied."""
        pts = model.normalize(points)
        sep = separation_of(model, pts) if len(pts) > 1 else math.inf
        net = cls(model, pts, math.nan, sep, seed)
        if epsilon_estimate is None:
            epsilon_estimate = covering_radius(model, net, probe_count, 0 if seed is None else seed)
        return cls(model, pts, float(epsilon_estimate), sep, seed)


class _Scorer:
    """Monotone surrogate of the geodesic distance from a pool to one pool point."""

    def __init__(self, model, pool):
        self.model = model
        if model.boxsize is None:
            self.embedded = model.embed(pool)
        else:
            self.embedded = None
            self.coords = [np.ascontiguousarray(pool[:, a]) for a in range(pool.shape[1])]
            self.box = [float(b) for b in model.boxsize]
            self.buf = np.empty(len(pool))

    def __call__(self, j):
        if self.embedded is not None:
            # circle and sphere embed on a round sphere: -<p, q> orders like arc length
            return -(self.embedded @ self.embedded[j])
        out = np.zeros(len(self.buf))
        for x, L in zip(self.coords, self.box):
            np.subtract(x, x[j], out=self.buf)
            np.abs(self.buf, out=self.buf)
            np.minimum(self.buf, L - self.buf, out=self.buf)
            out += self.buf * self.buf
        return out


def _greedy(model, pool, stop):
    """Farthest-point order over ``pool`` starting at pool[0].

    ``stop(count, gap)`` sees the current net size and the exact geodesic gap
    of the next candidate; returning True ends the run.
    """
    score = _Scorer(model, pool)
    chosen = [0]
    mind = score(0)
    while True:
        j = int(np.argmax(mind))
        gap = float(model.distance(pool[j], pool[chosen]).min())
        if stop(len(chosen), gap):
            break
        if gap <= 0.0:
            raise InvalidInputError("candidate pool exhausted: every pool point is already in the net")
        chosen.append(j)
        np.minimum(mind, score(j), out=mind)
    idx = np.asarray(chosen)
    far = int(np.argmax(mind))
    eps = float(model.distance(pool[far], pool[idx]).min())
    pts = pool[idx]
    sep = separation_of(model, pts) if len(idx) > 1 else math.inf
    return pts, eps, sep


def farthest_point_sample(model, target_count: int, seed: int, pool_factor: int = POOL_FACTOR) -> Net:
    """Greedy farthest-point net of ``target_count`` points over a uniform candidate pool.

    The pool holds ``pool_factor * target_count`` uniform samples drawn with
    ``seed``; its first sample is the first net point.  ``epsilon_estimate``
    is the covering radius of the net over the pool.
    """
    if target_count < 1:
        raise InvalidInputError("target_count must be at least 1")
    if pool_factor < POOL_FACTOR:
        raise InvalidInputError(f"pool_factor must be at least {POOL_FACTOR}")
    pool = model.sample(pool_factor * int(target_count), seed)
    pts, eps, sep = _greedy(model, pool, lambda count, gap: count >= target_count)
    return Net(model, pts, eps, sep, seed)


def farthest_point_sample_radius(model, epsilon: float, seed: int, pool_factor: int = POOL_FACTOR) -> Net:
    """Greedy farthest-point net grown until its covering radius over the pool is <= ``epsilon``.

    The pool holds ``pool_factor`` times a generous estimate of the required
    net size; overshooting that estimate is an error.
    """
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    n = model.dimension
    expected = int(math.ceil(2.0 * model.volume / (unit_ball_volume(n) * epsilon**n))) + 1
    pool = model.sample(pool_factor * expected, seed)

    def stop(count, gap):
        if gap <= epsilon:
            return True
        if count >= expected:
            raise InvalidInputError(f"epsilon={epsilon:g} needs more than {expected} points; "
                                    "candidate pool too small")
        return False

    pts, eps, sep = _greedy(model, pool, stop)
    return Net(model, pts, eps, sep, seed)


def covering_radius(model, net: Net, probe_count: int, seed: int) -> float:
    """Largest distance from ``probe_count`` fresh uniform probes to the net.

    A lower estimate of the true covering radius that increases towards it as
    ``probe_count`` grows.  Probes are ``model.sample(probe_count, seed)``.
    """
    if net is None or len(net.points) == 0:
        raise InvalidInputError("empty net")
    if probe_count < 1000:
        raise InvalidInputError("probe_count must be at least 1000")
    probes = model.sample(int(probe_count), seed)
    tree = _search.build_tree(model, net.points)
    _, dist = _search.nearest(model, tree, net.points, probes)
    return float(dist.max())


def separation_of(model, points, chunk=1024) -> float:
    """Exact minimum pairwise geodesic distance (O(N^2) scan)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise InvalidInputError("separation needs at least two points")
    best = math.inf
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        d = model.distance(block[:, None, :], pts[None, :, :])
        rows = np.arange(len(block))
        d[rows, rows + start] = np.inf
        best = min(best, float(d.min()))
    return best


def separation(model, net: Net) -> float:
    """Minimum pairwise distance of the net; warns when duplicate points are present."""
    sep = separation_of(model, net.points)
    if sep == 0.0:
        warnings.warn("net contains duplicate points (separation is 0)", RuntimeWarning, stacklevel=2)
    return sep
