"""Synthetic surface generators with analytic normals and edge segments.

Each generator samples a closed surface uniformly by area (stratified
per face), reports the exact outward normal of the supporting face at
every sample, and records the solid's creases as line segments so that
ground-truth labels follow from point-to-segment distances.

Canonical frames (before the optional random rigid pose):
  cube         [0,1]^3
  two_cube     unit cubes at offsets (0,0,0) and (0.5,0.5,0.5)
  four_cube    unit cubes chained along the main diagonal, step 0.5
  icosahedron  regular, circumradius 1, centered at the origin
  dodecahedron regular, circumradius 1, centered at the origin
  cone         apex (0,0,1), base disk of radius 0.5 in the z=0 plane
  angle        two unit squares sharing the edge x=0, z=0 along y,
               meeting at the given dihedral angle (180 = flat)
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import ConvexHull

from ..cloud import PointCloud, mean_spacing
from ..errors import DataError
from .dataset import LabeledCloud
from .labeling import (SHARP_BAND_FACTOR, SMOOTH_BAND_FACTOR,
                       label_by_edge_distance)

PRIMITIVE_KINDS = ("cube", "two_cube", "four_cube", "icosahedron",
                   "dodecahedron", "cone", "angle")

_CUBE_OFFSETS = {
    "cube": (0.0,),
    "two_cube": (0.0, 0.5),
    "four_cube": (0.0, 0.5, 1.0, 1.5),
}

CONE_RADIUS = 0.5
CONE_HEIGHT = 1.0
CONE_BASE_SEGMENTS = 256

_TINY = 1e-12


# ------------------------------------------------------------- allocation


def _largest_remainder(quotas):
    """Integer counts per bucket summing to round(sum(quotas))."""
    quotas = np.asarray(quotas, dtype=np.float64)
    total = int(np.round(quotas.sum()))
    base = np.floor(quotas).astype(np.int64)
    deficit = total - int(base.sum())
    if deficit > 0:
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:deficit]] += 1
    return base


def _sample_triangles(rng, tris, tri_normals, density):
    """Uniform area samples over a triangle soup; returns (points,
    normals). Constant coordinates of axis-aligned triangles stay exact
    because the barycentric combination only adds exact zeros there."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    counts = _largest_remainder(density * areas)
    ids = np.repeat(np.arange(len(tris)), counts)
    uv = rng.random((ids.size, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    pts = (a[ids] + uv[:, :1] * (b - a)[ids] + uv[:, 1:] * (c - a)[ids])
    return pts, tri_normals[ids].copy()


# ------------------------------------------------------------ cube unions


def _cube_boxes(kind):
    return [(np.full(3, o), np.full(3, o + 1.0)) for o in _CUBE_OFFSETS[kind]]


def _cube_face_triangles(lo, hi):
    """12 triangles (2 per face) with outward axis normals."""
    tris, normals = [], []
    for axis in range(3):
        b_ax, c_ax = (axis + 1) % 3, (axis + 2) % 3
        for side, value in ((-1.0, lo[axis]), (1.0, hi[axis])):
            corners = []
            for i, j in ((0, 0), (1, 0), (1, 1), (0, 1)):
                p = np.empty(3)
                p[axis] = value
                p[b_ax] = lo[b_ax] if i == 0 else hi[b_ax]
                p[c_ax] = lo[c_ax] if j == 0 else hi[c_ax]
                corners.append(p)
            n = np.zeros(3)
            n[axis] = side
            tris.append((corners[0], corners[1], corners[2]))
            tris.append((corners[0], corners[2], corners[3]))
            normals.extend([n, n])
    return np.asarray(tris), np.asarray(normals)


def _strictly_inside_any(points, boxes):
    inside = np.zeros(len(points), dtype=bool)
    for lo, hi in boxes:
        inside |= ((points > lo) & (points < hi)).all(axis=1)
    return inside


def _sample_cube_union(rng, kind, density):
    boxes = _cube_boxes(kind)
    tris, normals = [], []
    for lo, hi in boxes:
        t, n = _cube_face_triangles(lo, hi)
        tris.append(t)
        normals.append(n)
    pts, nrm = _sample_triangles(rng, np.concatenate(tris),
                                 np.concatenate(normals), density)
    keep = ~_strictly_inside_any(pts, boxes)
    return pts[keep], nrm[keep]


def _subtract_open_intervals(intervals):
    """[0,1] minus a union of open intervals; returns closed pieces."""
    if not intervals:
        return [(0.0, 1.0)]
    intervals = sorted(intervals)
    merged = [list(intervals[0])]
    for lo, hi in intervals[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    pieces, cursor = [], 0.0
    for lo, hi in merged:
        if lo > cursor:
            pieces.append((cursor, min(lo, 1.0)))
        cursor = max(cursor, hi)
        if cursor >= 1.0:
            break
    if cursor < 1.0:
        pieces.append((cursor, 1.0))
    return [(a, b) for a, b in pieces if b - a > _TINY]


def _clip_axis_segment(start, axis, length, boxes):
    """Clip an axis-parallel segment against the open interiors of the
    boxes; returns surviving closed sub-segments."""
    cuts = []
    for lo, hi in boxes:
        fixed = [ax for ax in range(3) if ax != axis]
        if not all(lo[ax] < start[ax] < hi[ax] for ax in fixed):
            continue
        t0 = (lo[axis] - start[axis]) / length
        t1 = (hi[axis] - start[axis]) / length
        if t1 > 0.0 and t0 < 1.0:
            cuts.append((t0, t1))
    out = []
    for a, b in _subtract_open_intervals(cuts):
        p = start.copy()
        q = start.copy()
        p[axis] += a * length
        q[axis] += b * length
        out.append((p, q))
    return out


def _cube_union_segments(kind):
    """Creases of a union of axis-aligned unit cubes: the cubes' own
    edges clipped to the outside of the other cubes, plus the concave
    contact creases where perpendicular faces meet."""
    boxes = _cube_boxes(kind)
    candidates = []

    for lo, hi in boxes:
        for axis in range(3):
            b_ax, c_ax = (axis + 1) % 3, (axis + 2) % 3
            for vb in (lo[b_ax], hi[b_ax]):
                for vc in (lo[c_ax], hi[c_ax]):
                    start = np.empty(3)
                    start[axis] = lo[axis]
                    start[b_ax] = vb
                    start[c_ax] = vc
                    candidates.append((start, axis, hi[axis] - lo[axis]))

    for (i, (lo_i, hi_i)), (j, (lo_j, hi_j)) in itertools.combinations(
            enumerate(boxes), 2):
        for ax_i in range(3):
            for v_i in (lo_i[ax_i], hi_i[ax_i]):
                for ax_j in range(3):
                    if ax_j == ax_i:
                        continue
                    for v_j in (lo_j[ax_j], hi_j[ax_j]):
                        if not (lo_j[ax_i] <= v_i <= hi_j[ax_i]
                                and lo_i[ax_j] <= v_j <= hi_i[ax_j]):
                            continue
                        free = 3 - ax_i - ax_j
                        lo_f = max(lo_i[free], lo_j[free])
                        hi_f = min(hi_i[free], hi_j[free])
                        if hi_f - lo_f <= _TINY:
                            continue
                        start = np.empty(3)
                        start[ax_i] = v_i
                        start[ax_j] = v_j
                        start[free] = lo_f
                        candidates.append((start, free, hi_f - lo_f))

    segments, seen = [], set()
    for start, axis, length in candidates:
        for p, q in _clip_axis_segment(start, axis, length, boxes):
            ends = sorted((tuple(np.round(p, 9)), tuple(np.round(q, 9))))
            key = tuple(ends)
            if key not in seen:
                seen.add(key)
                segments.append((p, q))
    return np.asarray(segments).reshape(-1, 2, 3)


def _cube_union_area(kind):
    """Exposed area of the union: total face area minus face portions
    hidden inside other cubes (inclusion-exclusion over the hidden
    rectangles; no three cubes overlap on a common face here)."""
    boxes = _cube_boxes(kind)
    area = 6.0 * len(boxes)
    for i, (lo_i, hi_i) in enumerate(boxes):
        for axis in range(3):
            b_ax, c_ax = (axis + 1) % 3, (axis + 2) % 3
            for value in (lo_i[axis], hi_i[axis]):
                rects = []
                for j, (lo_j, hi_j) in enumerate(boxes):
                    if j == i or not lo_j[axis] < value < hi_j[axis]:
                        continue
                    b0 = max(lo_i[b_ax], lo_j[b_ax])
                    b1 = min(hi_i[b_ax], hi_j[b_ax])
                    c0 = max(lo_i[c_ax], lo_j[c_ax])
                    c1 = min(hi_i[c_ax], hi_j[c_ax])
                    if b1 > b0 and c1 > c0:
                        rects.append((b0, b1, c0, c1))
                hidden = sum((b1 - b0) * (c1 - c0)
                             for b0, b1, c0, c1 in rects)
                for r, s in itertools.combinations(rects, 2):
                    db = min(r[1], s[1]) - max(r[0], s[0])
                    dc = min(r[3], s[3]) - max(r[2], s[2])
                    if db > 0 and dc > 0:
                        hidden -= db * dc
                area -= hidden
    return area


# -------------------------------------------------------------- polytopes


def _golden_ratio():
    return (1.0 + np.sqrt(5.0)) / 2.0


def _cyclic(v):
    return [np.asarray(v, dtype=np.float64),
            np.asarray((v[2], v[0], v[1]), dtype=np.float64),
            np.asarray((v[1], v[2], v[0]), dtype=np.float64)]


def _polytope_vertices(kind):
    phi = _golden_ratio()
    verts = []
    if kind == "icosahedron":
        for s1 in (-1.0, 1.0):
            for s2 in (-1.0, 1.0):
                verts.extend(_cyclic((0.0, s1, s2 * phi)))
    else:  # dodecahedron
        verts.extend(np.asarray(c, dtype=np.float64)
                     for c in itertools.product((-1.0, 1.0), repeat=3))
        for s1 in (-1.0, 1.0):
            for s2 in (-1.0, 1.0):
                verts.extend(_cyclic((0.0, s1 / phi, s2 * phi)))
    verts = np.asarray(verts)
    return verts / np.linalg.norm(verts, axis=1, keepdims=True)


def _polytope_mesh(kind):
    """Hull triangles with outward unit normals, plus the true polytope
    edges (triangle borders between non-coplanar faces)."""
    verts = _polytope_vertices(kind)
    hull = ConvexHull(verts)
    tri_normals = hull.equations[:, :3]
    group_keys = [tuple(np.round(eq, 9)) for eq in hull.equations]

    edge_groups = {}
    for simplex, key in zip(hull.simplices, group_keys):
        for u, v in itertools.combinations(sorted(simplex), 2):
            edge_groups.setdefault((u, v), set()).add(key)
    segments = [verts[[u, v]] for (u, v), groups in
                sorted(edge_groups.items()) if len(groups) > 1]
    tris = verts[hull.simplices]
    return tris, tri_normals, np.asarray(segments)


# ------------------------------------------------------------------- cone


def _cone_slant():
    return float(np.hypot(CONE_RADIUS, CONE_HEIGHT))


def _sample_cone(rng, density):
    lateral_area = np.pi * CONE_RADIUS * _cone_slant()
    base_area = np.pi * CONE_RADIUS ** 2
    n_lat, n_base = _largest_remainder(
        density * np.array([lateral_area, base_area]))

    uv = rng.random((n_lat, 2))
    theta = 2.0 * np.pi * uv[:, 0]
    s = np.sqrt(uv[:, 1])[:, None]  # area grows with distance from apex
    apex = np.array([0.0, 0.0, CONE_HEIGHT])
    ray = np.stack([CONE_RADIUS * np.cos(theta), CONE_RADIUS * np.sin(theta),
                    np.full(n_lat, -CONE_HEIGHT)], axis=1)
    lat_pts = apex + s * ray
    lat_nrm = np.stack([CONE_HEIGHT * np.cos(theta),
                        CONE_HEIGHT * np.sin(theta),
                        np.full(n_lat, CONE_RADIUS)], axis=1) / _cone_slant()

    uv = rng.random((n_base, 2))
    theta = 2.0 * np.pi * uv[:, 0]
    rho = CONE_RADIUS * np.sqrt(uv[:, 1])
    base_pts = np.stack([rho * np.cos(theta), rho * np.sin(theta),
                         np.zeros(n_base)], axis=1)
    base_nrm = np.tile([0.0, 0.0, -1.0], (n_base, 1))
    return (np.concatenate([lat_pts, base_pts]),
            np.concatenate([lat_nrm, base_nrm]))


def _cone_segments():
    theta = 2.0 * np.pi * np.arange(CONE_BASE_SEGMENTS + 1) / CONE_BASE_SEGMENTS
    ring = np.stack([CONE_RADIUS * np.cos(theta), CONE_RADIUS * np.sin(theta),
                     np.zeros(len(theta))], axis=1)
    segs = np.stack([ring[:-1], ring[1:]], axis=1)
    apex = np.array([[[0.0, 0.0, CONE_HEIGHT], [0.0, 0.0, CONE_HEIGHT]]])
    return np.concatenate([segs, apex])


# ------------------------------------------------------------------ angle


def _check_angle(angle_degrees):
    if not 0.0 < angle_degrees < 360.0:
        raise DataError(
            f"dihedral angle must be in (0, 360) degrees, got {angle_degrees}")


def _angle_is_flat(angle_degrees):
    return abs(angle_degrees - 180.0) < 1e-9


def _angle_triangles(angle_degrees):
    _check_angle(angle_degrees)
    alpha = np.radians(180.0 - angle_degrees)
    d = np.array([-np.cos(alpha), 0.0, np.sin(alpha)])
    y = np.array([0.0, 1.0, 0.0])
    o = np.zeros(3)
    flat = [(o, np.array([1.0, 0.0, 0.0]), np.array([1.0, 1.0, 0.0])),
            (o, np.array([1.0, 1.0, 0.0]), y)]
    folded = [(o, d, d + y), (o, d + y, y)]
    n_flat = np.array([0.0, 0.0, 1.0])
    n_fold = np.array([np.sin(alpha), 0.0, np.cos(alpha)])
    tris = np.asarray(flat + folded)
    normals = np.asarray([n_flat, n_flat, n_fold, n_fold])
    return tris, normals


# ------------------------------------------------------------- public API


def primitive_segments(kind, angle_degrees=90.0) -> np.ndarray:
    """Canonical-frame crease segments of a primitive, shape (S, 2, 3)."""
    if kind in _CUBE_OFFSETS:
        return _cube_union_segments(kind)
    if kind in ("icosahedron", "dodecahedron"):
        return _polytope_mesh(kind)[2]
    if kind == "cone":
        return _cone_segments()
    if kind == "angle":
        _check_angle(angle_degrees)
        if _angle_is_flat(angle_degrees):
            return np.empty((0, 2, 3))
        return np.array([[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
    raise DataError(f"unknown primitive kind {kind!r}")


def primitive_area(kind, angle_degrees=90.0) -> float:
    """Total exposed surface area of a primitive's canonical solid."""
    if kind in _CUBE_OFFSETS:
        return _cube_union_area(kind)
    if kind in ("icosahedron", "dodecahedron"):
        tris = _polytope_mesh(kind)[0]
        cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        return float(0.5 * np.linalg.norm(cross, axis=1).sum())
    if kind == "cone":
        return float(np.pi * CONE_RADIUS * (_cone_slant() + CONE_RADIUS))
    if kind == "angle":
        _check_angle(angle_degrees)
        return 2.0
    raise DataError(f"unknown primitive kind {kind!r}")


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def gen_primitive(kind, samples_per_unit_area, seed=0, *,
                  angle_degrees=90.0, random_pose=True,
                  sharp_band_factor=SHARP_BAND_FACTOR,
                  smooth_band_factor=SMOOTH_BAND_FACTOR) -> LabeledCloud:
    """Sample a primitive surface and label it by edge distance.

    Points are stratified-uniform by area with exact analytic outward
    normals. Label bands default to 1x and 3x the cloud's mean
    nearest-neighbor spacing. `random_pose` applies a seeded rigid
    motion so generated clouds are not axis-aligned by default.
    """
    density = float(samples_per_unit_area)
    if not density > 0.0:
        raise DataError(f"samples per unit area must be > 0, got {density}")
    if kind not in PRIMITIVE_KINDS:
        raise DataError(f"unknown primitive kind {kind!r}")

    rng = np.random.default_rng(seed)
    if kind in _CUBE_OFFSETS:
        points, normals = _sample_cube_union(rng, kind, density)
    elif kind in ("icosahedron", "dodecahedron"):
        tris, tri_normals, _ = _polytope_mesh(kind)
        points, normals = _sample_triangles(rng, tris, tri_normals, density)
    elif kind == "cone":
        points, normals = _sample_cone(rng, density)
    else:
        tris, tri_normals = _angle_triangles(angle_degrees)
        points, normals = _sample_triangles(rng, tris, tri_normals, density)

    segments = primitive_segments(kind, angle_degrees)
    if random_pose:
        rotation = _random_rotation(rng)
        translation = rng.uniform(-1.0, 1.0, 3)
        points = points @ rotation.T + translation
        normals = normals @ rotation.T
        if len(segments):
            segments = segments @ rotation.T + translation

    cloud = PointCloud(points, normals)
    if len(segments) == 0:
        labels = np.zeros(len(points), dtype=np.uint8)
    else:
        spacing = mean_spacing(cloud, k=1)
        labels = label_by_edge_distance(
            cloud, segments, sharp_band_factor * spacing,
            smooth_band_factor * spacing)

    parameters = {
        "samples_per_unit_area": density,
        "random_pose": bool(random_pose),
        "sharp_band_factor": float(sharp_band_factor),
        "smooth_band_factor": float(smooth_band_factor),
    }
    if kind == "angle":
        parameters["angle_degrees"] = float(angle_degrees)
    provenance = {"generator": kind, "parameters": parameters,
                  "sigma": 0.0, "seed": int(seed)}
    return LabeledCloud(cloud, labels, provenance)
