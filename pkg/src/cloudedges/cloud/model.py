"""Point cloud container, spatial queries, and basic geometric statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DataError, NumericError


@dataclass
class PointCloud:
    """An unordered set of 3D points with optional per-point unit normals.

    Positions are kept in float64 for numerical work regardless of the
    on-disk precision.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    _index: cKDTree | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"points must be (M, 3), got {pts.shape}")
        if pts.shape[0] == 0:
            raise DataError("point cloud is empty")
        if not np.isfinite(pts).all():
            raise DataError("points contain non-finite coordinates")
        self.points = pts
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise DataError(
                    f"normals shape {nrm.shape} does not match points {pts.shape}"
                )
            if not np.isfinite(nrm).all():
                raise DataError("normals contain non-finite values")
            self.normals = nrm

    def __len__(self):
        return self.points.shape[0]

    @property
    def has_normals(self):
        return self.normals is not None

    def index(self) -> "SpatialIndex":
        """k-d tree over the points, built once and cached."""
        if self._index is None:
            self._index = SpatialIndex(self.points)
        return self._index


class SpatialIndex:
    """Nearest-neighbor and ball queries over a fixed point set."""

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64)
        self.tree = cKDTree(self.points)

    def __len__(self):
        return self.points.shape[0]

    def k_nearest(self, query, k):
        """Indices of the min(k, M) nearest points to `query`, sorted by
        non-decreasing distance. `query` may be one point or a (Q, 3) block."""
        m = len(self)
        k_eff = min(int(k), m)
        if k_eff < 1:
            raise DataError(f"k must be >= 1, got {k}")
        _, idx = self.tree.query(query, k=k_eff)
        if k_eff == 1:
            idx = np.atleast_1d(idx)[..., None] if np.ndim(idx) == 0 else idx[..., None]
        return idx

    def neighbors_in_ball(self, query, radius):
        """Indices of all points with distance <= radius, sorted by index."""
        if radius < 0:
            raise DataError(f"radius must be >= 0, got {radius}")
        out = self.tree.query_ball_point(query, radius, return_sorted=True)
        return out


def mean_spacing(cloud: PointCloud, k: int = 10) -> float:
    """Average over all points of the mean distance to the k nearest
    neighbors (self excluded)."""
    m = len(cloud)
    if m < 2:
        raise DataError("mean_spacing needs at least 2 points")
    k_eff = min(int(k), m - 1)
    if k_eff < 1:
        raise DataError(f"k must be >= 1, got {k}")
    dist, _ = cloud.index().tree.query(cloud.points, k=k_eff + 1)
    # column 0 is the point itself at distance 0
    value = float(dist[:, 1:].mean())
    if not np.isfinite(value) or value <= 0.0:
        raise NumericError("mean spacing is degenerate (duplicate points?)")
    return value


def bbox_diagonal(cloud: PointCloud) -> float:
    """Length of the axis-aligned bounding box diagonal (0 for one point)."""
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    return float(np.linalg.norm(hi - lo))
