"""Analytic manifold models with exact Laplace-Beltrami spectra.

Three closed manifolds are supported: the circle of radius ``R``, the flat
torus ``[0, lx) x [0, ly)`` and the round sphere of radius ``R``.  Points are
stored as float arrays of shape ``(count, coord_dim)`` in chart coordinates:
an angle for the circle, ``(x, y)`` for the torus and a unit 3-vector for the
sphere (the sphere of radius ``R`` is the unit sphere scaled by ``R``).
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .errors import InvalidInputError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ExactSpectrumEntry:
    """One distinct eigenvalue of ``-Delta_M`` with its multiplicity."""

    eigenvalue: float
    multiplicity: int
    level: int


def _wrap(values, period):
    out = np.mod(values, period)
    # np.mod can return `period` itself for tiny negative inputs
    out[out >= period] = 0.0
    return out


class ManifoldModel:
    """Common interface of the analytic models."""

    kind: str
    dimension: int
    coord_dim: int

    # -- geometry ---------------------------------------------------------
    @property
    def volume(self) -> float:
        raise NotImplementedError

    @property
    def injectivity_radius(self) -> float:
        raise NotImplementedError

    @property
    def curvature_bound(self) -> float:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    def normalize(self, points) -> np.ndarray:
        raise NotImplementedError

    def distance(self, p, q) -> np.ndarray:
        """Geodesic distance between matching rows of ``p`` and ``q`` (broadcasts)."""
        raise NotImplementedError

    def sample(self, count: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    def embed(self, points) -> np.ndarray:
        """Euclidean coordinates in which nearest neighbours agree with geodesic ones."""
        raise NotImplementedError

    def embed_radius(self, r: float) -> float:
        """Euclidean radius (in :meth:`embed` coordinates) covering a geodesic ``r``-ball."""
        raise NotImplementedError

    boxsize = None

    # -- spectrum ---------------------------------------------------------
    def spectrum_levels(self, count: int) -> list[ExactSpectrumEntry]:
        raise NotImplementedError

    def basis(self, level: int, points) -> np.ndarray:
        raise NotImplementedError

    # -- shared helpers ---------------------------------------------------
    def check_points(self, points) -> np.ndarray:
        """Validate and return ``points`` as a ``(count, coord_dim)`` array."""
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 0 and self.coord_dim == 1:
            arr = arr.reshape(1, 1)
        if arr.ndim == 1:
            if self.coord_dim == 1:
                arr = arr.reshape(-1, 1)
            elif arr.shape[0] == self.coord_dim:
                arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[1] != self.coord_dim:
            raise InvalidInputError(
                f"{self.kind} points need {self.coord_dim} coordinate(s), got shape {np.shape(points)}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("points contain non-finite coordinates")
        return arr

    def pairwise(self, a, b) -> np.ndarray:
        """Full ``len(a) x len(b)`` geodesic distance matrix."""
        a = self.check_points(a)
        b = self.check_points(b)
        return self.distance(a[:, None, :], b[None, :, :])

    def header(self) -> str:
        params = " ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.kind} {params}"

    def params(self) -> dict:
        raise NotImplementedError

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            **self.params(),
            "dimension": self.dimension,
            "volume": self.volume,
            "injectivity_radius": self.injectivity_radius,
            "curvature_bound": self.curvature_bound,
            "diameter": self.diameter,
        }


@dataclass(frozen=True)
class Circle(ManifoldModel):
    radius: float = 1.0

    kind = "circle"
    dimension = 1
    coord_dim = 1

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError("circle radius must be positive")

    def params(self):
        return {"radius": float(self.radius)}

    @property
    def volume(self):
        return TWO_PI * self.radius

    @property
    def injectivity_radius(self):
        return math.pi * self.radius

    @property
    def curvature_bound(self):
        return 0.0

    @property
    def diameter(self):
        return math.pi * self.radius

    def normalize(self, points):
        return _wrap(self.check_points(points), TWO_PI)

    def distance(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        d = np.mod(np.abs(p[..., 0] - q[..., 0]), TWO_PI)
        return self.radius * np.minimum(d, TWO_PI - d)

    def sample(self, count, seed):
        rng = np.random.default_rng(seed)
        return _wrap(rng.uniform(0.0, TWO_PI, size=(count, 1)), TWO_PI)

    def embed(self, points):
        theta = np.asarray(points, dtype=float)[:, 0]
        return self.radius * np.column_stack([np.cos(theta), np.sin(theta)])

    def embed_radius(self, r):
        r = min(r, math.pi * self.radius)
        return 2.0 * self.radius * math.sin(r / (2.0 * self.radius)) * (1 + 1e-12) + 1e-15

    def spectrum_levels(self, count):
        entries = [ExactSpectrumEntry(0.0, 1, 0)]
        total, m = 1, 0
        while total < count:
            m += 1
            entries.append(ExactSpectrumEntry(m * m / self.radius**2, 2, m))
            total += 2
        return entries

    def basis(self, level, points):
        level = int(level)
        if level < 0:
            raise InvalidInputError(f"unknown circle level {level}")
        theta = self.check_points(points)[:, 0]
        if level == 0:
            return np.full((theta.size, 1), 1.0 / math.sqrt(self.volume))
        scale = 1.0 / math.sqrt(math.pi * self.radius)
        return scale * np.column_stack([np.cos(level * theta), np.sin(level * theta)])


@dataclass(frozen=True)
class FlatTorus2(ManifoldModel):
    lx: float = 1.0
    ly: float = 1.0

    kind = "torus"
    dimension = 2
    coord_dim = 2

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0):
            raise InvalidInputError("torus side lengths must be positive")

    def params(self):
        return {"lx": float(self.lx), "ly": float(self.ly)}

    @property
    def volume(self):
        return self.lx * self.ly

    @property
    def injectivity_radius(self):
        return min(self.lx, self.ly) / 2.0

    @property
    def curvature_bound(self):
        return 0.0

    @property
    def diameter(self):
        return 0.5 * math.hypot(self.lx, self.ly)

    @property
    def boxsize(self):
        return np.array([self.lx, self.ly])

    def normalize(self, points):
        pts = self.check_points(points).copy()
        pts[:, 0] = _wrap(pts[:, 0], self.lx)
        pts[:, 1] = _wrap(pts[:, 1], self.ly)
        return pts

    def distance(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        dx = np.mod(np.abs(p[..., 0] - q[..., 0]), self.lx)
        dy = np.mod(np.abs(p[..., 1] - q[..., 1]), self.ly)
        return np.hypot(np.minimum(dx, self.lx - dx), np.minimum(dy, self.ly - dy))

    def sample(self, count, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.0, 1.0, size=(count, 2)) * np.array([self.lx, self.ly])
        return self.normalize(pts)

    def embed(self, points):
        return self.normalize(points)

    def embed_radius(self, r):
        return r * (1 + 1e-12) + 1e-15

    def _classes(self, count):
        # grow the enumeration box until it certainly holds `count` eigenvalues
        bound = 1.0
        while True:
            pmax = int(math.ceil(math.sqrt(bound) * self.lx / TWO_PI)) + 1
            qmax = int(math.ceil(math.sqrt(bound) * self.ly / TWO_PI)) + 1
            p, q = np.meshgrid(np.arange(-pmax, pmax + 1), np.arange(-qmax, qmax + 1), indexing="ij")
            p, q = p.ravel(), q.ravel()
            lam = 4 * math.pi**2 * ((p / self.lx) ** 2 + (q / self.ly) ** 2)
            keep = lam <= bound
            if keep.sum() >= count:
                break
            bound *= 2.0
        p, q, lam = p[keep], q[keep], lam[keep]
        order = np.lexsort((q, p, lam))
        p, q, lam = p[order], q[order], lam[order]
        classes = []
        for pi, qi, li in zip(p, q, lam):
            if classes and abs(li - classes[-1][0]) <= 1e-12 * max(1.0, li):
                classes[-1][1].append((int(pi), int(qi)))
            else:
                classes.append([float(li), [(int(pi), int(qi))]])
        total = 0
        out = []
        for li, vecs in classes:
            if total >= count:
                break
            out.append((li, vecs))
            total += len(vecs)
        return out

    def spectrum_levels(self, count):
        return [ExactSpectrumEntry(lam, len(vecs), i) for i, (lam, vecs) in enumerate(self._classes(count))]

    def _level_vectors(self, level):
        classes = self._classes(level + 1)
        while len(classes) <= level:
            classes = self._classes(2 * sum(len(v) for _, v in classes) + 1)
        vecs = classes[level][1]
        # one representative of each +-v pair
        return [v for v in vecs if v > (0, 0)] if vecs != [(0, 0)] else [(0, 0)]

    def basis(self, level, points):
        level = int(level)
        if level < 0:
            raise InvalidInputError(f"unknown torus level {level}")
        pts = self.check_points(points)
        vecs = self._level_vectors(level)
        if vecs == [(0, 0)]:
            return np.full((pts.shape[0], 1), 1.0 / math.sqrt(self.volume))
        scale = math.sqrt(2.0 / self.volume)
        cols = []
        for p, q in vecs:
            phase = TWO_PI * (p * pts[:, 0] / self.lx + q * pts[:, 1] / self.ly)
            cols.append(scale * np.cos(phase))
            cols.append(scale * np.sin(phase))
        return np.column_stack(cols)


@dataclass(frozen=True)
class Sphere2(ManifoldModel):
    radius: float = 1.0

    kind = "sphere"
    dimension = 2
    coord_dim = 3

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError("sphere radius must be positive")

    def params(self):
        return {"radius": float(self.radius)}

    @property
    def volume(self):
        return 4.0 * math.pi * self.radius**2

    @property
    def injectivity_radius(self):
        return math.pi * self.radius

    @property
    def curvature_bound(self):
        return 1.0 / self.radius**2

    @property
    def diameter(self):
        return math.pi * self.radius

    def check_points(self, points):
        arr = super().check_points(points)
        norms = np.linalg.norm(arr, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidInputError("sphere points must be unit 3-vectors")
        return arr

    def normalize(self, points):
        arr = np.asarray(points, dtype=float)
        arr = arr.reshape(-1, 3) if arr.ndim == 1 else arr
        norms = np.linalg.norm(arr, axis=1, keepdims=True)
        if np.any(norms == 0) or not np.all(np.isfinite(arr)):
            raise InvalidInputError("cannot normalize zero or non-finite sphere points")
        return arr / norms

    def distance(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        dot = np.einsum("...i,...i->...", p, q)
        cross = np.linalg.norm(np.cross(p, q), axis=-1)
        # atan2 form: same value as arccos(clip(dot)) but accurate near 0 and pi
        return self.radius * np.arctan2(cross, np.clip(dot, -1.0, 1.0))

    def sample(self, count, seed):
        rng = np.random.default_rng(seed)
        g = rng.standard_normal(size=(count, 3))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def embed(self, points):
        return np.asarray(points, dtype=float)

    def embed_radius(self, r):
        # chord length on the unit sphere
        r = min(r / self.radius, math.pi)
        return 2.0 * math.sin(r / 2.0) * (1 + 1e-12) + 1e-15

    def spectrum_levels(self, count):
        entries, total, l = [], 0, 0
        while total < count:
            entries.append(ExactSpectrumEntry(l * (l + 1) / self.radius**2, 2 * l + 1, l))
            total += 2 * l + 1
            l += 1
        return entries

    def basis(self, level, points):
        l = int(level)
        if l < 0:
            raise InvalidInputError(f"unknown sphere level {level}")
        pts = self.check_points(points)
        polar = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
        azim = np.arctan2(pts[:, 1], pts[:, 0])
        cols = []
        for m in range(-l, l + 1):
            y = special.sph_harm_y(l, abs(m), polar, azim)
            if m < 0:
                cols.append(math.sqrt(2.0) * y.imag)
            elif m == 0:
                cols.append(y.real)
            else:
                cols.append(math.sqrt(2.0) * y.real)
        return np.column_stack(cols) / self.radius


# -- functional API ---------------------------------------------------------

def make_model(kind: str, radius: float = 1.0, lx: float = 1.0, ly: float = 1.0) -> ManifoldModel:
    kind = kind.lower()
    if kind == "circle":
        return Circle(radius)
    if kind in ("torus", "flat_torus", "flattorus2"):
        return FlatTorus2(lx, ly)
    if kind == "sphere":
        return Sphere2(radius)
    raise InvalidInputError(f"unknown manifold kind {kind!r}")


def parse_header(line: str) -> ManifoldModel:
    """Inverse of :meth:`ManifoldModel.header`."""
    parts = line.strip().lstrip("#").split()
    if not parts:
        raise InvalidInputError("empty model header")
    kwargs = {}
    for item in parts[1:]:
        key, _, value = item.partition("=")
        kwargs[key] = float(value)
    return make_model(parts[0], **kwargs)


def geodesic_distance(model: ManifoldModel, p, q) -> float:
    p = model.check_points(p)
    q = model.check_points(q)
    if p.shape[0] != 1 or q.shape[0] != 1:
        raise InvalidInputError("geodesic_distance takes single points; use model.distance for arrays")
    return float(model.distance(p[0], q[0]))


def sample_uniform(model: ManifoldModel, count: int, seed: int) -> np.ndarray:
    if count < 1:
        raise InvalidInputError("sample count must be at least 1")
    return model.sample(int(count), seed)


def exact_spectrum(model: ManifoldModel, count: int) -> list[ExactSpectrumEntry]:
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    return model.spectrum_levels(int(count))


def exact_eigenvalues(model: ManifoldModel, count: int) -> np.ndarray:
    """First ``count`` eigenvalues of ``-Delta_M`` repeated by multiplicity."""
    vals = []
    for entry in exact_spectrum(model, count):
        vals.extend([entry.eigenvalue] * entry.multiplicity)
    return np.asarray(vals[:count])


def eigenspace_basis_eval(model: ManifoldModel, level: int, x) -> np.ndarray:
    """Values at ``x`` of an L2-orthonormal real basis of eigenspace ``level``.

    Returns shape ``(len(x), multiplicity)``; a single point gives a 1-D vector.
    """
    single = np.ndim(x) == 0 or (np.ndim(x) == 1 and model.coord_dim > 1)
    out = model.basis(level, model.check_points(np.atleast_1d(x)))
    return out[0] if single else out
