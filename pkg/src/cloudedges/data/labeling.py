"""Ground-truth edge labels from point-to-segment distances.

A point is a sharp-edge point when it lies within `sharp_band` of any
edge segment, a smooth-edge point when it lies within `smooth_band`
(the halo around the sharp ribbon), and a non-edge point otherwise.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DataError

# Default band widths as multiples of the cloud's mean nearest-neighbor
# spacing: the sharp class is a one-sample-wide ribbon, the smooth class
# its halo.
SHARP_BAND_FACTOR = 1.0
SMOOTH_BAND_FACTOR = 3.0

# Segment sets at or below this size are cheaper to scan directly than
# to prune through a spatial index.
_BRUTE_FORCE_LIMIT = 32


def _as_points(cloud_or_points) -> np.ndarray:
    points = getattr(cloud_or_points, "points", cloud_or_points)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DataError(f"points must be (M, 3), got {points.shape}")
    return points


def _as_segments(segments) -> np.ndarray:
    segs = np.asarray(segments, dtype=np.float64)
    if segs.size == 0:
        return segs.reshape(0, 2, 3)
    segs = segs.reshape(-1, 2, 3)
    if not np.isfinite(segs).all():
        raise DataError("edge segments contain non-finite coordinates")
    return segs


def _pair_distances(points, starts, directions, lengths_sq):
    """Distance from each point to its paired segment (flat arrays)."""
    rel = points - starts
    dots = np.einsum("ij,ij->i", rel, directions)
    with np.errstate(invalid="ignore"):
        t = np.where(lengths_sq > 0.0,
                     np.clip(dots / np.where(lengths_sq > 0.0, lengths_sq,
                                             1.0), 0.0, 1.0), 0.0)
    closest = starts + t[:, None] * directions
    return np.linalg.norm(points - closest, axis=1)


def segment_distances_brute(points, segments) -> np.ndarray:
    """Minimal distance from each point to any segment, scanning every
    (point, segment) pair. Exact; reference for the accelerated path."""
    points = _as_points(points)
    segs = _as_segments(segments)
    if len(segs) == 0:
        raise DataError("need at least one segment")
    best = np.full(len(points), np.inf)
    for a, b in segs:
        direction = b - a
        length_sq = float(direction @ direction)
        d = _pair_distances(points, a[None], direction[None],
                            np.array([length_sq]))
        np.minimum(best, d, out=best)
    return best


def _sample_segments(segs):
    """Dense point samples along each segment (including endpoints) with
    the owning segment index, plus the largest half-gap between
    consecutive samples."""
    lengths = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
    scale = lengths.max()
    step = max(scale / 8.0, 1e-12)
    samples, parents, half_gap = [], [], 0.0
    for idx, (a, b) in enumerate(segs):
        n = max(2, int(np.ceil(lengths[idx] / step)) + 1)
        t = np.linspace(0.0, 1.0, n)
        samples.append(a + t[:, None] * (b - a))
        parents.append(np.full(n, idx, dtype=np.intp))
        if n > 1:
            half_gap = max(half_gap, lengths[idx] / (n - 1) / 2.0)
    return np.concatenate(samples), np.concatenate(parents), half_gap


def segment_distances(points, segments) -> np.ndarray:
    """Minimal distance from each point to any segment.

    Exact: a KD-tree over dense segment samples bounds the search; every
    segment whose true distance could beat the nearest sample lies within
    that bound, and the candidates are then evaluated exactly.
    """
    points = _as_points(points)
    segs = _as_segments(segments)
    if len(segs) == 0:
        raise DataError("need at least one segment")
    if len(segs) <= _BRUTE_FORCE_LIMIT:
        return segment_distances_brute(points, segs)

    samples, parents, half_gap = _sample_segments(segs)
    tree = cKDTree(samples)
    nearest_sample, _ = tree.query(points)
    radius = nearest_sample + 2.0 * half_gap + 1e-12
    neighborhoods = tree.query_ball_point(points, radius)

    point_ids, seg_ids = [], []
    for k, hood in enumerate(neighborhoods):
        cands = np.unique(parents[hood])
        point_ids.append(np.full(len(cands), k, dtype=np.intp))
        seg_ids.append(cands)
    point_ids = np.concatenate(point_ids)
    seg_ids = np.concatenate(seg_ids)

    starts = segs[seg_ids, 0]
    directions = segs[seg_ids, 1] - starts
    lengths_sq = np.einsum("ij,ij->i", directions, directions)
    d = _pair_distances(points[point_ids], starts, directions, lengths_sq)

    best = np.full(len(points), np.inf)
    np.minimum.at(best, point_ids, d)
    return best


def label_by_edge_distance(cloud, edge_segments, sharp_band,
                           smooth_band) -> np.ndarray:
    """Per-point labels 0/1/2 (non-edge / sharp-edge / smooth-edge) by
    distance to the nearest edge segment. An empty segment list labels
    everything non-edge."""
    if not (0.0 < sharp_band < smooth_band):
        raise DataError(
            f"bands must satisfy 0 < sharp < smooth, got "
            f"{sharp_band} / {smooth_band}")
    points = _as_points(cloud)
    segs = _as_segments(edge_segments)
    if len(segs) == 0:
        return np.zeros(len(points), dtype=np.uint8)
    d = segment_distances(points, segs)
    return np.where(d <= sharp_band, 1,
                    np.where(d <= smooth_band, 2, 0)).astype(np.uint8)
