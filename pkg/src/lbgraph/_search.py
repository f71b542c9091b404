"""KD-tree backed neighbour queries in geodesic distance.

Each model supplies an embedding in which Euclidean (or periodic Euclidean)
order agrees with geodesic order, so candidate sets come from ``cKDTree`` and
the returned distances are recomputed exactly with ``model.distance``.
"""
import numpy as np
from scipy.spatial import cKDTree


def build_tree(model, points):
    return cKDTree(model.embed(points), boxsize=model.boxsize, balanced_tree=False)


def nearest(model, tree, points, queries, chunk=200_000):
    """Index of and geodesic distance to the nearest of ``points`` for each query.

    Exact ties in embedded distance go to the lowest index.
    """
    idx = np.empty(len(queries), dtype=np.int64)
    dist = np.empty(len(queries))
    kk = min(3, len(points))
    for start in range(0, len(queries), chunk):
        q = queries[start:start + chunk]
        dd, jj = tree.query(model.embed(q), k=kk)
        dd, jj = dd.reshape(len(q), kk), jj.reshape(len(q), kk)
        tied = dd == dd[:, :1]
        j = np.where(tied, jj, np.iinfo(np.int64).max).min(axis=1)
        idx[start:start + chunk] = j
        dist[start:start + chunk] = model.distance(q, points[j])
    return idx, dist


def ball_pairs(model, tree, points, queries, r, closed=True, query_chunk=256):
    """Yield ``(query_index, point_index, distance)`` arrays for all pairs within ``r``.

    ``closed`` selects ``d <= r`` (otherwise ``d < r``).  Each block covers
    ``query_chunk`` consecutive queries; pair order inside a block is fixed
    by the trees, so repeated calls give identical output.
    """
    radius = model.embed_radius(r)
    for start in range(0, len(queries), query_chunk):
        q = queries[start:start + query_chunk]
        qtree = cKDTree(model.embed(q), boxsize=model.boxsize, balanced_tree=False)
        pairs = qtree.sparse_distance_matrix(tree, radius, output_type="ndarray")
        rows = pairs["i"].astype(np.int64)
        cols = pairs["j"].astype(np.int64)
        d = model.distance(q[rows], points[cols])
        keep = d <= r if closed else d < r
        yield rows[keep] + start, cols[keep], d[keep]


def neighbour_table(model, tree, points, queries, r, k0=8, chunk=200_000):
    """Indices of all ``points`` within closed distance ``r`` of each query.

    Returns an int64 array of shape ``(len(queries), K)``; each row is sorted
    ascending and padded with -1.
    """
    radius = model.embed_radius(r)
    n = len(points)
    k = min(k0, n)
    while True:
        table = np.empty((len(queries), k), dtype=np.int64)
        full = False
        for start in range(0, len(queries), chunk):
            q = queries[start:start + chunk]
            _, j = tree.query(model.embed(q), k=k, distance_upper_bound=radius)
            j = np.asarray(j).reshape(len(q), k)
            if k < n and np.any(j[:, -1] < n):
                full = True
                break
            valid = j < n
            d = np.full(j.shape, np.inf)
            rows, cols = np.nonzero(valid)
            d[rows, cols] = model.distance(q[rows], points[j[rows, cols]])
            j = np.where(valid & (d <= r), j, n)
            j.sort(axis=1)
            table[start:start + chunk] = np.where(j == n, -1, j)
        if not full:
            width = int((table >= 0).sum(axis=1).max(initial=0))
            return table[:, :max(width, 1)]
        k = min(2 * k, n)
