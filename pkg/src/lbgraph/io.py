"""Plain-text, JSON and binary persistence of pipeline artifacts.

Floats are written with 17 significant digits so files round-trip exactly
and identical inputs produce byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .manifold import parse_header

FLOAT_FMT = "%.17g"


def _path(p) -> Path:
    p = Path(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def write_json(path, obj):
    with open(_path(path), "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# -- points and nets -------------------------------------------------------------

def write_points(path, model, points):
    """Header line with the model, then one point per line."""
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    with open(_path(path), "w", encoding="utf-8") as fh:
        fh.write(f"# {model.header()}\n")
        np.savetxt(fh, pts, fmt=FLOAT_FMT)


def read_points(path):
    """Returns ``(model, points)``."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise InvalidInputError(f"{path}: missing model header line")
        model = parse_header(first[1:].strip())
        data = np.loadtxt(fh, ndmin=2)
    return model, model.check_points(data.reshape(-1, model.coord_dim))


def write_net(path, net):
    path = Path(path)
    write_points(path, net.model, net.points)
    write_json(path.with_suffix(".json"), {
        "N": net.size,
        "epsilon_estimate": net.epsilon_estimate,
        "separation": net.separation,
        "seed": net.seed,
        "model": net.model.describe(),
    })


def read_net(path):
    from .net import Net

    path = Path(path)
    model, pts = read_points(path)
    meta = read_json(path.with_suffix(".json"))
    return Net(model, pts, float(meta["epsilon_estimate"]), float(meta["separation"]), meta.get("seed"))


# -- weights ---------------------------------------------------------------------

def write_weights(path, wnet):
    """Weights as JSON plus the sample-to-cell map as little-endian int32."""
    path = Path(path)
    blob = path.with_suffix(".assignment.bin")
    write_json(path, {
        "N": wnet.N,
        "S": wnet.S,
        "seed": wnet.seed,
        "total_mass": wnet.total_mass,
        "weights": wnet.weights.tolist(),
        "assignment_file": blob.name,
    })
    wnet.assignment.astype("<i4").tofile(_path(blob))


def read_weights(path):
    """Returns ``(weights, assignment or None)``; also accepts a bare JSON array or text column."""
    path = Path(path)
    try:
        data = read_json(path)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return np.loadtxt(path, ndmin=1).astype(float), None
    if isinstance(data, list):
        return np.asarray(data, dtype=float), None
    assignment = None
    blob = path.parent / data.get("assignment_file", "")
    if data.get("assignment_file") and blob.exists():
        assignment = np.fromfile(blob, dtype="<i4").astype(np.int64)
    return np.asarray(data["weights"], dtype=float), assignment


# -- graphs ----------------------------------------------------------------------

def write_graph(path, g):
    """Header ``N n rho nu_n kernel``, then ``i j w_ij`` per undirected edge; weights alongside."""
    path = Path(path)
    i, j, w = g.edges()
    with open(_path(path), "w", encoding="utf-8") as fh:
        fh.write(f"# N={g.N} n={g.n} rho={g.rho!r} nu_n={g.nu_n!r} kernel={g.kernel}\n")
        for a, b, c in zip(i.tolist(), j.tolist(), w.tolist()):
            fh.write(f"{a} {b} {c!r}\n")
    np.savetxt(_path(path.with_suffix(".weights.txt")), g.mu, fmt=FLOAT_FMT)


def read_graph(path):
    from scipy import sparse

    from .graph import ProximityGraph

    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = dict(tok.split("=", 1) for tok in fh.readline().lstrip("#").split())
        edges = np.loadtxt(fh, ndmin=2)
    mu = np.loadtxt(path.with_suffix(".weights.txt"), ndmin=1)
    N = int(header["N"])
    if edges.size:
        i, j, w = edges[:, 0].astype(np.int64), edges[:, 1].astype(np.int64), edges[:, 2]
    else:
        i = j = np.empty(0, np.int64)
        w = np.empty(0)
    W = sparse.csr_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                          shape=(N, N))
    return ProximityGraph(mu, W, int(header["n"]), float(header["rho"]), header["kernel"])


# -- spectra ---------------------------------------------------------------------

def write_spectrum(path, spec):
    """Eigenvalues, residuals and solver metadata as JSON; eigenvectors as column-major float64."""
    path = Path(path)
    blob = path.with_suffix(".eigenvectors.bin")
    write_json(path, {
        "eigenvalues": spec.eigenvalues.tolist(),
        "residuals": spec.residuals.tolist(),
        "metadata": spec.metadata(),
        "eigenvectors_file": blob.name,
        "eigenvectors_shape": list(spec.eigenvectors.shape),
        "eigenvectors_layout": "column-major little-endian float64",
    })
    np.asfortranarray(spec.eigenvectors).astype("<f8").T.tofile(_path(blob))


def read_spectrum(path):
    from .spectra import Spectrum

    path = Path(path)
    data = read_json(path)
    N, k = data["eigenvectors_shape"]
    vecs = np.fromfile(path.parent / data["eigenvectors_file"], dtype="<f8").reshape(k, N).T
    meta = dict(data["metadata"])
    return Spectrum(np.asarray(data["eigenvalues"]), np.ascontiguousarray(vecs), np.asarray(data["residuals"]),
                    int(meta.pop("iterations")), float(meta.pop("tol")), meta.pop("method"),
                    {k2: v for k2, v in meta.items() if k2 != "k"})


# -- functions -------------------------------------------------------------------

def write_discrete_function(path, u, net_file=None):
    write_json(path, {"net": None if net_file is None else str(net_file), **u.to_dict()})


def write_field(path, model, points, values):
    """Tabulated field: coordinate columns then value column(s), comma separated."""
    pts = model.check_points(points)
    vals = np.asarray(values, dtype=float).reshape(len(pts), -1)
    coords = [f"x{a}" for a in range(pts.shape[1])]
    names = ["value"] if vals.shape[1] == 1 else [f"value{c}" for c in range(vals.shape[1])]
    np.savetxt(_path(path), np.hstack([pts, vals]), fmt=FLOAT_FMT, delimiter=",",
               header=",".join(coords + names), comments="")
