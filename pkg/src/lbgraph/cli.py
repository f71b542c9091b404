"""Command-line interface.

Exit status: 0 on success, 2 on invalid input, 3 when the eigensolver does
not converge.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path
import sys
import warnings

import numpy as np

from . import io
from .errors import ConvergenceError, InvalidInputError, StageError
from .graph import DistanceMatrixInput, build_proximity_graph
from .harness import (EPS_INFLATION, RunConfig, run_convergence_sweep, run_pipeline, stage,
                      working_epsilon)
from .measure import monte_carlo_voronoi_weights, verify_volume_approximation
from .net import farthest_point_sample, farthest_point_sample_radius
from .spectra import smallest_eigenpairs

EXIT_OK, EXIT_INVALID, EXIT_CONVERGENCE = 0, 2, 3
COMMANDS = ("net", "weights", "verify-measure", "graph", "spectrum", "compare", "align", "converge")


def _parser():
    p = argparse.ArgumentParser(prog="lbgraph", description="Graph Laplacian spectra on sampled manifolds.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=("circle", "torus", "sphere"), default="circle")
    common.add_argument("--radius", type=float, default=1.0, help="circle or sphere radius")
    common.add_argument("--lx", type=float, default=1.0, help="torus side length in x")
    common.add_argument("--ly", type=float, default=1.0, help="torus side length in y")
    size = common.add_mutually_exclusive_group()
    size.add_argument("--n-points", type=int, default=None, help="net size (default 1500)")
    size.add_argument("--epsilon", type=float, default=None, help="target covering radius of the net")
    common.add_argument("--rho", type=float, default=0.12, help="graph connection radius")
    common.add_argument("--samples", type=int, default=10**6, help="quadrature sample count S")
    common.add_argument("--k", type=int, default=7, help="number of eigenpairs")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--kernel", choices=("flat", "quadratic"), default=None)
    common.add_argument("--tol", type=float, default=1e-10, help="eigensolver tolerance")
    common.add_argument("--align-samples", type=int, default=1000)
    common.add_argument("--out", default=None, help="output directory")
    external = argparse.ArgumentParser(add_help=False)
    external.add_argument("--distance-matrix", default=None, help="N x N distance matrix (text or .npy)")
    external.add_argument("--weights", default=None, help="vertex weights (JSON array, weights JSON or text)")
    external.add_argument("--dim", type=int, default=None, help="intrinsic dimension n of external data")
    external.add_argument("--vol", type=float, default=None, help="total volume of external data")

    sub.add_parser("net", parents=[common], help="farthest-point net")
    sub.add_parser("weights", parents=[common], help="Monte Carlo Voronoi weights")
    vm = sub.add_parser("verify-measure", parents=[common], help="epsilon-approximation check of the weights")
    vm.add_argument("--check-epsilon", type=float, default=None,
                    help="radius to test (default: 1.1 x covering estimate)")
    sub.add_parser("graph", parents=[common, external], help="proximity graph")
    sub.add_parser("spectrum", parents=[common, external], help="smallest eigenpairs")
    sub.add_parser("compare", parents=[common], help="graph spectrum against the exact spectrum")
    sub.add_parser("align", parents=[common], help="comparison plus eigenspace alignment")
    cv = sub.add_parser("converge", parents=[common], help="error-versus-rho sweep")
    cv.add_argument("--rhos", type=float, nargs="+", required=True, help="descending radii")
    cv.add_argument("--ratio", type=float, default=0.05, help="fixed epsilon/rho")
    cv.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    cv.add_argument("--k-max", type=int, default=5)
    return p


def _config(args, **over) -> RunConfig:
    n_points = args.n_points if (args.n_points is not None or args.epsilon is not None) else 1500
    cfg = RunConfig(model=args.model, radius=args.radius, lx=args.lx, ly=args.ly, n_points=n_points,
                    epsilon=args.epsilon, rho=args.rho, samples=args.samples, k=args.k, seed=args.seed,
                    kernel=args.kernel, out=args.out, tol=args.tol, align_samples=args.align_samples)
    for key, val in over.items():
        setattr(cfg, key, val)
    return cfg


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _out(args):
    return Path(args.out) if args.out else None


def _build_wnet(cfg, out):
    model, _ = cfg.validate()
    seeds = cfg.stage_seeds()
    with stage("net"):
        if cfg.n_points is not None:
            net = farthest_point_sample(model, cfg.n_points, seeds["net"])
        else:
            net = farthest_point_sample_radius(model, cfg.epsilon, seeds["net"])
        if out:
            io.write_net(out / "net.txt", net)
    with stage("weights"):
        wnet = monte_carlo_voronoi_weights(model, net, cfg.samples, seeds["weights"])
        if out:
            io.write_weights(out / "weights.json", wnet)
    return model, net, wnet


def _external_graph(args):
    if args.weights is None or args.dim is None:
        raise InvalidInputError("--distance-matrix needs --weights and --dim")
    path = Path(args.distance_matrix)
    d = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, ndmin=2)
    mu, _ = io.read_weights(args.weights)
    data = DistanceMatrixInput(d, mu, args.dim, args.vol)
    return build_proximity_graph(data, args.rho, args.kernel)


def _graph_stage(args, out):
    if args.distance_matrix:
        with stage("graph"):
            g = _external_graph(args)
    else:
        _, _, wnet = _build_wnet(_config(args), out)
        with stage("graph"):
            g = build_proximity_graph(wnet, args.rho, args.kernel)
    if out:
        io.write_graph(out / "graph.txt", g)
    return g


def _run(args):
    out = _out(args)
    cmd = args.command
    if cmd == "net":
        cfg = _config(args)
        model, _ = cfg.validate()
        if cfg.n_points is not None:
            net = farthest_point_sample(model, cfg.n_points, cfg.stage_seeds()["net"])
        else:
            net = farthest_point_sample_radius(model, cfg.epsilon, cfg.stage_seeds()["net"])
        if out:
            io.write_net(out / "net.txt", net)
        _emit({"N": net.size, "epsilon_estimate": net.epsilon_estimate, "separation": net.separation})
    elif cmd == "weights":
        _, net, wnet = _build_wnet(_config(args), out)
        _emit({"N": wnet.N, "S": wnet.S, "total_mass": wnet.total_mass,
               "min_weight": float(wnet.weights.min()), "max_weight": float(wnet.weights.max())})
    elif cmd == "verify-measure":
        model, _, wnet = _build_wnet(_config(args), out)
        eps = args.check_epsilon or EPS_INFLATION * working_epsilon(wnet)
        with stage("verify-measure"):
            rep = verify_volume_approximation(model, wnet, eps)
        if not rep.feasible:
            warnings.warn(f"weights are not an epsilon-approximation of volume at epsilon={eps:.6g}",
                          RuntimeWarning, stacklevel=1)
        if out:
            io.write_json(out / "measure.json", rep.to_dict())
        _emit(rep.to_dict())
    elif cmd == "graph":
        g = _graph_stage(args, out)
        _emit({"N": g.N, "edges": g.n_edges, "connected": g.connected, "components": int(g.n_components)})
    elif cmd == "spectrum":
        g = _graph_stage(args, out)
        with stage("spectrum"):
            spec = smallest_eigenpairs(g, args.k, tol=args.tol, seed=args.seed)
        if out:
            io.write_spectrum(out / "spectrum.json", spec)
        _emit({"eigenvalues": spec.eigenvalues.tolist(), "residuals": spec.residuals.tolist(),
               **spec.metadata()})
    elif cmd in ("compare", "align"):
        report = run_pipeline(_config(args, align=cmd == "align"))
        sys.stdout.write(report.to_csv())
    elif cmd == "converge":
        result = run_convergence_sweep(_config(args), args.rhos, args.ratio, args.seeds, args.k_max)
        if out:
            out.mkdir(parents=True, exist_ok=True)
            (out / "sweep.csv").write_text(result.to_csv(), encoding="utf-8")
            (out / "sweep.json").write_text(result.to_json(), encoding="utf-8")
        sys.stdout.write(result.to_csv())
        if result.slopes:
            _emit({"slopes": result.slopes})
    return EXIT_OK


def _root_cause(exc):
    while isinstance(exc, StageError):
        exc = exc.cause
    return exc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except (InvalidInputError, ConvergenceError, StageError) as exc:
        cause = _root_cause(exc)
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(cause, ConvergenceError):
            return EXIT_CONVERGENCE
        if isinstance(cause, InvalidInputError):
            return EXIT_INVALID
        raise


if __name__ == "__main__":
    sys.exit(main())
