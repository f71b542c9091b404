"""Vertex measures approximating the Riemannian volume, and their verification.

A :class:`WeightedNet` couples a net with vertex weights ``mu_i`` and one
quadrature sample set.  Each sample carries a mass and is assigned to a net
vertex (its empirical Voronoi cell); the cell masses are the weights.  The same
samples are reused by :mod:`lbgraph.maps` for every integral.

Whether ``mu`` is an epsilon-approximation of volume is decided on the empirical
measure as a transport problem: every sample must ship its mass to vertices
within distance ``epsilon`` without exceeding any vertex weight.  This is a
bipartite max-flow, solved on integer capacities so the answer is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import maximum_flow

from . import _search
from .errors import EmptyCellError, InvalidInputError
from .manifold import Circle, TWO_PI
from .net import Net

FLOW_UNITS = 2**30


@dataclass(eq=False)
class WeightedNet:
    """Net with vertex weights and the shared quadrature that defines its cells."""

    model: object
    net: Net
    weights: np.ndarray
    samples: np.ndarray
    assignment: np.ndarray
    sample_mass: np.ndarray
    counts: np.ndarray | None = None
    seed: int | None = None
    _tree: object = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        self.sample_mass = np.broadcast_to(np.asarray(self.sample_mass, dtype=float),
                                           (len(self.samples),)).copy()
        if self.weights.shape != (len(self.net.points),):
            raise InvalidInputError("one weight per net point expected")
        if self.assignment.shape != (len(self.samples),):
            raise InvalidInputError("one cell index per sample expected")

    @property
    def N(self) -> int:
        return len(self.net.points)

    @property
    def S(self) -> int:
        return len(self.samples)

    @property
    def points(self) -> np.ndarray:
        return self.net.points

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    @property
    def sample_tree(self):
        if self._tree is None:
            self._tree = _search.build_tree(self.model, self.samples)
        return self._tree

    def cell_masses(self) -> np.ndarray:
        return np.bincount(self.assignment, weights=self.sample_mass, minlength=self.N)

    def reweighted(self, weights) -> "WeightedNet":
        """Same net and quadrature with different vertex weights (cells unchanged)."""
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0):
            raise InvalidInputError("weights must be positive")
        out = WeightedNet(self.model, self.net, w, self.samples, self.assignment,
                          self.sample_mass, None, self.seed)
        out._tree = self._tree
        return out


def monte_carlo_voronoi_weights(model, net: Net, sample_count: int, seed: int) -> WeightedNet:
    """Voronoi cell volumes estimated from ``sample_count`` uniform samples.

    Each sample goes to its nearest net point and carries mass ``vol/S``, so
    ``mu_i = vol * count_i / S``.
    """
    N = len(net.points)
    if sample_count < 100 * N:
        raise InvalidInputError(f"sample_count must be at least 100 * N = {100 * N}")
    samples = model.sample(int(sample_count), seed)
    tree = _search.build_tree(model, net.points)
    assignment, _ = _search.nearest(model, tree, net.points, samples)
    counts = np.bincount(assignment, minlength=N)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyCellError(empty[0])
    S = int(sample_count)
    weights = model.volume * counts / S
    return WeightedNet(model, net, weights, samples, assignment, model.volume / S, counts, seed)


def exact_circle_weights(model, net: Net, samples_per_cell: int = 64) -> WeightedNet:
    """Exact Voronoi arc lengths on the circle with a midpoint quadrature per cell."""
    if not isinstance(model, Circle):
        raise InvalidInputError("exact weights are only available on the circle")
    theta = net.points[:, 0]
    N = theta.size
    if N < 2:
        raise InvalidInputError("exact circle weights need at least two points")
    order = np.argsort(theta, kind="stable")
    ts = theta[order]
    gaps = np.diff(np.append(ts, ts[0] + TWO_PI))  # gap from point k to k+1
    if np.any(gaps <= 0):
        raise InvalidInputError("duplicate angles in net")
    prev_gap = np.roll(gaps, 1)
    arcs = 0.5 * (prev_gap + gaps)
    weights = np.empty(N)
    weights[order] = model.radius * arcs
    m = int(samples_per_cell)
    frac = (np.arange(m) + 0.5) / m
    start = ts - 0.5 * prev_gap
    sample_theta = start[:, None] + arcs[:, None] * frac[None, :]
    samples = np.mod(sample_theta.ravel(), TWO_PI).reshape(-1, 1)
    samples[samples >= TWO_PI] = 0.0
    assignment = np.repeat(order, m)
    mass = np.repeat(weights[order] / m, m)
    return WeightedNet(model, net, weights, samples, assignment, mass, None, None)


# -- verification ---------------------------------------------------------------

@dataclass(frozen=True)
class ApproximationReport:
    epsilon_tested: float
    feasible: bool
    epsilon_star: float
    flow_deficit: float
    resolution: float

    def to_dict(self):
        return {
            "epsilon_tested": self.epsilon_tested,
            "feasible": self.feasible,
            "epsilon_star": self.epsilon_star,
            "flow_deficit": self.flow_deficit,
            "monte_carlo_resolution": self.resolution,
        }


def apportion(masses, total_units: int) -> np.ndarray:
    """Integers proportional to ``masses`` summing exactly to ``total_units`` (largest remainder)."""
    masses = np.asarray(masses, dtype=float)
    raw = masses * (total_units / math.fsum(masses))
    base = np.floor(raw + 1e-7).astype(np.int64)
    short = int(total_units - base.sum())
    if short > 0:
        frac = raw - base
        base[np.argsort(-frac, kind="stable")[:short]] += 1
    elif short < 0:
        frac = raw - base
        pick = [i for i in np.argsort(frac, kind="stable") if base[i] > 0][:-short]
        base[pick] -= 1
    return base


class _FlowProblem:
    """Integer capacities for the transport check, reused across epsilon values."""

    def __init__(self, model, wnet: WeightedNet):
        self.model = model
        self.wnet = wnet
        total = min(FLOW_UNITS, max(wnet.S, 1) * max(1, FLOW_UNITS // max(wnet.S, 1)))
        self.total_units = int(total)
        self.sample_units = apportion(wnet.sample_mass, self.total_units)
        self.vertex_units = apportion(wnet.weights, self.total_units)
        self.net_tree = _search.build_tree(model, wnet.net.points)
        self.balanced = abs(math.fsum(wnet.weights) - math.fsum(wnet.sample_mass)) <= 1e-9 * model.volume

    def max_flow(self, epsilon) -> int:
        w = self.wnet
        table = _search.neighbour_table(self.model, self.net_tree, w.net.points, w.samples, epsilon)
        covered = table[:, 0] >= 0
        if not covered.any():
            return 0
        # samples with identical neighbour sets are merged into one source node
        keys, inverse = _group_rows(table[covered])
        group_units = np.bincount(inverse, weights=self.sample_units[covered]).astype(np.int64)
        G, N = len(keys), w.N
        src, sink = 0, G + N + 1
        gi, slot = np.nonzero(keys >= 0)
        rows = np.concatenate([np.zeros(G, np.int64), 1 + gi, 1 + G + np.arange(N)])
        cols = np.concatenate([1 + np.arange(G), 1 + G + keys[gi, slot], np.full(N, sink)])
        caps = np.concatenate([group_units, group_units[gi], self.vertex_units])
        graph = sparse.csr_matrix((caps.astype(np.int32), (rows, cols)), shape=(G + N + 2,) * 2)
        return int(maximum_flow(graph, src, sink, method="dinic").flow_value)

    def feasible(self, epsilon):
        flow = self.max_flow(epsilon)
        return self.balanced and flow == self.total_units, flow


def _group_rows(rows):
    """``(unique_rows, inverse)`` via a 64-bit row hash, checked exactly."""
    mult = np.random.default_rng(0x5EED).integers(1, 2**63, size=rows.shape[1], dtype=np.uint64) | np.uint64(1)
    with np.errstate(over="ignore"):
        h = ((rows.astype(np.uint64) + np.uint64(1)) * mult).sum(axis=1, dtype=np.uint64)
    _, first, inverse = np.unique(h, return_index=True, return_inverse=True)
    keys = rows[first]
    if not np.array_equal(keys[inverse], rows):
        # hash collision: exact grouping
        keys, inverse = np.unique(rows, axis=0, return_inverse=True)
    return keys, np.asarray(inverse).ravel()


def verify_volume_approximation(model, wnet: WeightedNet, epsilon: float, bisect: bool = True,
                                rel_width: float = 1e-2) -> ApproximationReport:
    """Decide whether ``wnet.weights`` epsilon-approximate volume on the stored quadrature.

    ``epsilon_star`` is the smallest feasible radius found by bisection over
    ``[0, diameter]`` down to relative width ``rel_width`` (NaN when ``bisect``
    is False).
    """
    if wnet is None or wnet.samples is None or len(wnet.samples) == 0:
        raise InvalidInputError("weighted net carries no quadrature samples")
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    problem = _FlowProblem(model, wnet)
    ok, flow = problem.feasible(epsilon)
    deficit = (problem.total_units - flow) / problem.total_units * model.volume
    resolution = model.volume / math.sqrt(wnet.S)
    star = math.nan
    if bisect:
        star = _bisect_star(model, wnet, problem, ok, epsilon, rel_width)
    return ApproximationReport(float(epsilon), bool(ok), star, float(deficit), resolution)


def _bisect_star(model, wnet, problem, ok_at_eps, epsilon, rel_width):
    if problem.feasible(0.0)[0]:
        return 0.0
    hi = model.diameter
    if ok_at_eps:
        hi = min(hi, epsilon)
    consistent = np.allclose(wnet.cell_masses(), wnet.weights, rtol=1e-12, atol=0.0)
    if consistent:
        # identity transport: every sample stays in its own cell
        d = model.distance(wnet.samples, wnet.net.points[wnet.assignment])
        hi = min(hi, float(d.max()))
    if not problem.feasible(hi)[0]:
        return math.inf
    lo = 0.0
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if problem.feasible(mid)[0]:
            hi = mid
        else:
            lo = mid
    return hi
