"""Normal estimation with globally consistent orientation.

Per-point normals come from the smallest eigenvector of the k-neighborhood
covariance. Signs are propagated along a minimum spanning tree of the
neighbor graph weighted by 1 - |n_i . n_j|, seeded at the point with the
largest z whose normal is forced toward +z. Degenerate neighborhoods
(covariance rank < 2) copy the nearest valid neighbor's normal.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree
from scipy.spatial import cKDTree

from ..errors import DataError
from .model import PointCloud


def estimate_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    """Return a new cloud with estimated unit normals."""
    m = len(cloud)
    if m < 3:
        raise DataError("normal estimation needs at least 3 points")
    k_eff = min(int(k), m - 1)
    if k_eff < 2:
        raise DataError(f"k must be >= 2, got {k}")

    pts = cloud.points
    _, knn = cloud.index().tree.query(pts, k=k_eff + 1)  # includes self

    nbrs = pts[knn]                                  # (M, k+1, 3)
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("mki,mkj->mij", centered, centered)
    eigval, eigvec = np.linalg.eigh(cov)             # ascending eigenvalues
    normals = eigvec[:, :, 0].copy()

    # rank < 2: second eigenvalue vanishes relative to the largest
    scale = np.maximum(eigval[:, 2], 1e-300)
    invalid = eigval[:, 1] <= 1e-12 * scale
    if invalid.any():
        valid_idx = np.flatnonzero(~invalid)
        if valid_idx.size == 0:
            raise DataError("all neighborhoods are degenerate (collinear cloud?)")
        donor_tree = cKDTree(pts[valid_idx])
        _, donor = donor_tree.query(pts[invalid], k=1)
        normals[invalid] = normals[valid_idx[np.atleast_1d(donor)]]

    normals /= np.linalg.norm(normals, axis=1, keepdims=True)

    _orient_mst(pts, knn[:, 1:], normals)
    return PointCloud(pts.copy(), normals)


def _orient_mst(pts, neigh, normals):
    """Flip normal signs in place for global consistency."""
    m = pts.shape[0]
    k = neigh.shape[1]
    a = np.repeat(np.arange(m), k)
    b = neigh.ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    code = np.unique(lo.astype(np.int64) * m + hi)
    lo, hi = code // m, code % m

    dots = np.abs(np.einsum("ij,ij->i", normals[lo], normals[hi]))
    # strictly positive weights; csgraph treats 0 as "no edge"
    weights = 1.0 + 1e-9 - np.minimum(dots, 1.0)
    graph = csr_matrix((weights, (lo, hi)), shape=(m, m))
    mst = minimum_spanning_tree(graph)

    visited = np.zeros(m, dtype=bool)
    while not visited.all():
        rest = np.flatnonzero(~visited)
        seed = int(rest[np.argmax(pts[rest, 2])])
        if normals[seed, 2] < 0:
            normals[seed] = -normals[seed]
        order, pred = breadth_first_order(mst, seed, directed=False,
                                          return_predecessors=True)
        for node in order[1:]:
            parent = pred[node]
            if np.dot(normals[node], normals[parent]) < 0:
                normals[node] = -normals[node]
        visited[order] = True
