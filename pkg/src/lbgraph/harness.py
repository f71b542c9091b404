"""End-to-end runs: net, weights, measure check, graph, spectrum, comparison, alignment.

Every random stage draws from a seed derived from ``RunConfig.seed`` through
``numpy.random.SeedSequence``, so a configuration determines its report
byte for byte.
"""
from __future__ import annotations

from contextlib import contextmanager
import csv
from dataclasses import asdict, dataclass, field, replace
import io as _stdio
import json
import math
from pathlib import Path
import warnings

import numpy as np

from . import io
from .errors import AmbiguousClusterError, InvalidInputError, StageError
from .graph import build_proximity_graph
from .manifold import exact_eigenvalues, exact_spectrum, make_model
from .maps import interpolate
from .measure import monte_carlo_voronoi_weights, verify_volume_approximation
from .net import farthest_point_sample, farthest_point_sample_radius
from .spectra import smallest_eigenpairs

CSV_COLUMNS = ("k", "lambda_exact", "lambda_graph", "abs_err", "rel_err", "alignment")
EPS_INFLATION = 1.1


@dataclass
class RunConfig:
    """Parameters of one pipeline run.

    Exactly one of ``n_points`` (net size) and ``epsilon`` (target covering
    radius) selects the net.
    """

    model: str = "circle"
    radius: float = 1.0
    lx: float = 1.0
    ly: float = 1.0
    n_points: int | None = 1500
    epsilon: float | None = None
    rho: float = 0.12
    samples: int = 10**6
    k: int = 7
    seed: int = 0
    kernel: str | None = None
    out: str | None = None
    verify: bool = True
    align: bool = True
    align_samples: int = 1000
    tol: float = 1e-10

    def make_model(self):
        return make_model(self.model, radius=self.radius, lx=self.lx, ly=self.ly)

    def validate(self):
        if (self.n_points is None) == (self.epsilon is None):
            raise InvalidInputError("give exactly one of n_points and epsilon")
        if self.n_points is not None and self.n_points < 1:
            raise InvalidInputError("n_points must be at least 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")
        if not self.rho > 0:
            raise InvalidInputError("rho must be positive")
        if self.k < 1:
            raise InvalidInputError("k must be at least 1")
        if self.align_samples < 1:
            raise InvalidInputError("align_samples must be at least 1")
        model = self.make_model()
        notes = []
        if self.rho >= model.injectivity_radius / 2:
            notes.append(f"rho={self.rho:g} is not below half the injectivity radius "
                         f"({model.injectivity_radius / 2:g})")
        return model, notes

    def stage_seeds(self) -> dict:
        names = ("net", "weights", "solver", "align")
        children = np.random.SeedSequence(int(self.seed)).spawn(len(names))
        return {name: int(c.generate_state(1)[0]) for name, c in zip(names, children)}


def ratio_limit(n: int) -> float:
    """Upper limit for ``epsilon / rho``: ``min(1/n, 1/3)``."""
    return min(1.0 / n, 1.0 / 3.0)


@contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if not isinstance(x, (int, np.integer)) else str(int(x))


# -- reports -----------------------------------------------------------------------

@dataclass
class ComparisonRow:
    k: int
    lambda_exact: float
    lambda_graph: float
    abs_err: float
    rel_err: float
    alignment: float | None = None


@dataclass(frozen=True)
class AlignmentScore:
    k: int
    level: int
    lambda_exact: float
    multiplicity: int
    score: float


@dataclass
class ConvergenceReport:
    rows: list
    params: dict
    measure: dict | None = None
    solver: dict | None = None
    alignment: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    # in-memory net, weights, graph and spectrum; never serialised
    artifacts: dict = field(default_factory=dict, repr=False, compare=False)

    def to_csv(self) -> str:
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.k] + [_fmt(getattr(r, c)) for c in CSV_COLUMNS[1:]])
        return buf.getvalue()

    def envelope(self) -> dict:
        return {
            "params": self.params,
            "measure": self.measure,
            "solver": self.solver,
            "alignment": [asdict(a) for a in self.alignment],
            "warnings": list(self.warnings),
            "rows": [asdict(r) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.envelope()), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.to_csv(), encoding="utf-8")
        (out / "report.json").write_text(self.to_json(), encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if math.isnan(x) else (repr(x) if math.isinf(x) else x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def compare_spectrum(model, eigenvalues, k: int) -> list:
    """Rows ``k = 1..k``; relative error against nonzero exact values, absolute for zero."""
    exact = exact_eigenvalues(model, k)
    rows = []
    for i in range(k):
        lam_m = float(exact[i])
        lam_g = float(eigenvalues[i]) if i < len(eigenvalues) else math.nan
        abs_err = abs(lam_g - lam_m)
        rel = abs_err / lam_m if lam_m != 0 else abs_err
        rows.append(ComparisonRow(i + 1, lam_m, lam_g, abs_err, rel))
    return rows


def working_epsilon(wnet) -> float:
    """Covering estimate from the pool and from the quadrature samples' cell distances."""
    d = wnet.model.distance(wnet.samples, wnet.points[wnet.assignment])
    return max(float(wnet.net.epsilon_estimate), float(d.max()))


# -- alignment ------------------------------------------------------------------------

def match_cluster(levels, value, rtol=1e-12):
    """Exact level nearest to ``value``; equidistant candidates raise."""
    dist = np.array([abs(value - e.eigenvalue) for e in levels])
    order = np.argsort(dist, kind="stable")
    best = levels[order[0]]
    if len(levels) > 1:
        second = levels[order[1]]
        if abs(dist[order[1]] - dist[order[0]]) <= rtol * max(1.0, abs(value)):
            raise AmbiguousClusterError(value, (best.eigenvalue, second.eigenvalue))
    return best


def _levels_covering(model, top):
    count = 16
    while True:
        levels = exact_spectrum(model, count)
        if levels[-1].eigenvalue > 2.0 * top + 1.0:
            return levels
        count *= 2


def eigenspace_alignment(model, wnet, spectrum, k_range, rho, epsilon, sample_count=1000, seed=0,
                         levels=None) -> list:
    """Fraction of ``||I u_k||`` captured by the matched exact eigenspace.

    ``I u_k`` is tabulated at ``sample_count`` fresh uniform points; the exact
    basis of the cluster is re-orthonormalised on those points, so each score
    is the norm of a projection over the norm of the vector and lies in
    [0, 1].  ``levels`` maps ``k`` to a level index and overrides matching.
    """
    ks = [int(k) for k in k_range]
    if not ks:
        return []
    if min(ks) < 1 or max(ks) > spectrum.k:
        raise InvalidInputError(f"k_range must lie in 1..{spectrum.k}")
    if sample_count < 1:
        raise InvalidInputError("sample_count must be positive")
    lam = spectrum.eigenvalues
    table = _levels_covering(model, float(max(lam[k - 1] for k in ks)))
    by_level = {e.level: e for e in table}
    pts = model.sample(int(sample_count), seed)
    w = math.sqrt(model.volume / len(pts))
    G = interpolate(wnet, spectrum.eigenvectors[:, [k - 1 for k in ks]], rho, epsilon)(pts)
    G = G.reshape(len(pts), -1) * w
    out = []
    for col, k in enumerate(ks):
        if levels is not None and k in levels:
            lvl = int(levels[k])
            entry = by_level.get(lvl) or {e.level: e for e in exact_spectrum(model, 4 * lvl * lvl + 16)}[lvl]
        else:
            entry = match_cluster(table, float(lam[k - 1]))
        F = model.basis(entry.level, pts) * w
        Q, _ = np.linalg.qr(F)
        g = G[:, col]
        gn = float(np.linalg.norm(g))
        score = float(np.linalg.norm(Q.T @ g) / gn) if gn > 0 else 0.0
        out.append(AlignmentScore(k, int(entry.level), float(entry.eigenvalue), int(entry.multiplicity), score))
    return out


# -- pipeline --------------------------------------------------------------------------

def run_pipeline(config: RunConfig, persist: bool = True) -> ConvergenceReport:
    """Run all stages for ``config``; artifacts go to ``config.out`` when set."""
    with stage("config"):
        model, notes = config.validate()
    seeds = config.stage_seeds()
    out = Path(config.out) if (config.out and persist) else None

    with stage("net"):
        if config.n_points is not None:
            net = farthest_point_sample(model, int(config.n_points), seeds["net"])
        else:
            net = farthest_point_sample_radius(model, float(config.epsilon), seeds["net"])
        if out:
            io.write_net(out / "net.txt", net)
    N = net.size
    with stage("weights"):
        wnet = monte_carlo_voronoi_weights(model, net, int(config.samples), seeds["weights"])
        if out:
            io.write_weights(out / "weights.json", wnet)
    eps_est = working_epsilon(wnet)
    epsilon = EPS_INFLATION * eps_est
    ratio = epsilon / config.rho
    if ratio >= ratio_limit(model.dimension):
        notes.append(f"epsilon/rho={ratio:.4g} is not below min(1/n, 1/3)={ratio_limit(model.dimension):.4g}")

    measure = None
    if config.verify:
        with stage("verify-measure"):
            rep = verify_volume_approximation(model, wnet, epsilon, bisect=True)
            measure = rep.to_dict()
            if not rep.feasible:
                notes.append(f"weights are not an epsilon-approximation of volume at epsilon={epsilon:.6g}")
            if out:
                io.write_json(out / "measure.json", _jsonable(measure))

    with stage("graph"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            g = build_proximity_graph(wnet, config.rho, config.kernel)
        notes.extend(str(c.message) for c in caught)
        if out:
            io.write_graph(out / "graph.txt", g)

    k_eff = min(int(config.k), N)
    with stage("spectrum"):
        spec = smallest_eigenpairs(g, k_eff, tol=config.tol, seed=seeds["solver"])
        if out:
            io.write_spectrum(out / "spectrum.json", spec)

    with stage("compare"):
        rows = compare_spectrum(model, spec.eigenvalues, int(config.k))

    scores = []
    if config.align:
        r = config.rho - 2.0 * epsilon
        if r > 0:
            with stage("align"):
                scores = eigenspace_alignment(model, wnet, spec, range(1, k_eff + 1), config.rho, epsilon,
                                              config.align_samples, seeds["align"])
            for s in scores:
                rows[s.k - 1].alignment = s.score
        else:
            notes.append("alignment skipped: rho - 2 epsilon is not positive")

    params = {
        "model": model.describe(),
        "N": N,
        "S": wnet.S,
        "rho": config.rho,
        "epsilon_estimate": eps_est,
        "epsilon": epsilon,
        "epsilon_over_rho": ratio,
        "k": int(config.k),
        "seed": int(config.seed),
        "stage_seeds": seeds,
        "kernel": config.kernel or "flat",
        "graph_edges": g.n_edges,
        "graph_connected": g.connected,
    }
    report = ConvergenceReport(rows, params, measure, _jsonable(spec.metadata()), scores, notes,
                               {"model": model, "net": net, "wnet": wnet, "graph": g, "spectrum": spec,
                                "epsilon": epsilon})
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if out:
        report.write(out)
    return report


# -- sweeps ----------------------------------------------------------------------------

@dataclass
class SweepRow:
    rho: float
    epsilon_target: float
    n_points: list
    rel_err: dict
    max_rel_err: float
    per_seed_max: list


@dataclass
class SweepResult:
    rows: list
    slopes: dict | None
    ks: list

    def to_csv(self) -> str:
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rho", "epsilon_target", "n_points_median", "max_rel_err"] + [f"rel_err_k{k}" for k in self.ks])
        for r in self.rows:
            w.writerow([_fmt(r.rho), _fmt(r.epsilon_target), _fmt(float(np.median(r.n_points))),
                        _fmt(r.max_rel_err)] + [_fmt(r.rel_err[k]) for k in self.ks])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(_jsonable({"rows": [asdict(r) for r in self.rows], "slopes": self.slopes,
                                     "ks": self.ks}), indent=2, sort_keys=True) + "\n"


def _slope(rhos, errs):
    x = np.log(np.asarray(rhos, dtype=float))
    y = np.asarray(errs, dtype=float)
    if np.any(y <= 0):
        return math.nan
    return float(np.polyfit(x, np.log(y), 1)[0])


def run_convergence_sweep(base: RunConfig, rho_list, ratio: float, seeds=(0, 1, 2), k_max: int = 5,
                          ) -> SweepResult:
    """Rerun the pipeline for each ``rho`` with nets of covering radius ``ratio * rho``.

    Errors are relative errors for ``k = 2..k_max``; each row stores the
    per-k median over ``seeds`` and the median over seeds of the per-seed
    maximum.  Slopes of log error against log rho are fitted when there are
    at least two radii.
    """
    rhos = [float(r) for r in rho_list]
    if not rhos:
        raise InvalidInputError("rho_list is empty")
    if any(b >= a for a, b in zip(rhos, rhos[1:])):
        raise InvalidInputError("rho_list must be strictly descending")
    if not 0 < ratio < 1:
        raise InvalidInputError("ratio must lie in (0, 1)")
    if k_max < 2:
        raise InvalidInputError("k_max must be at least 2")
    ks = list(range(2, k_max + 1))
    rows = []
    for rho in rhos:
        per_k = {k: [] for k in ks}
        maxes, sizes = [], []
        for s in seeds:
            cfg = replace(base, rho=rho, n_points=None, epsilon=ratio * rho, seed=int(s), k=k_max,
                          verify=False, align=False, out=None)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    rep = run_pipeline(cfg, persist=False)
            except StageError as exc:
                raise StageError(exc.stage, exc.cause, partial=SweepResult(rows, None, ks)) from exc
            errs = {r.k: r.rel_err for r in rep.rows if r.k in per_k}
            for k in ks:
                per_k[k].append(errs[k])
            maxes.append(max(errs.values()))
            sizes.append(rep.params["N"])
        rows.append(SweepRow(rho, ratio * rho, sizes, {k: float(np.median(v)) for k, v in per_k.items()},
                             float(np.median(maxes)), maxes))
    slopes = None
    if len(rows) >= 2:
        slopes = {"max": _slope(rhos, [r.max_rel_err for r in rows])}
        slopes.update({f"k{k}": _slope(rhos, [r.rel_err[k] for r in rows]) for k in ks})
    return SweepResult(rows, slopes, ks)
