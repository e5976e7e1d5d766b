"""Tests for synthetic dataset generation, labeling, noise, and bookkeeping.

Oracles are built independently of the implementation: cube edges are
enumerated from corner pairs, polytope surfaces are checked against
convex-hull inequalities of the textbook golden-ratio vertex sets, and
noise magnitudes against chi statistics.
"""

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from cloudedges.cloud import PointCloud, load_cloud, load_labels, mean_spacing
from cloudedges.data import (
    Label,
    LabeledCloud,
    add_gaussian_noise,
    dataset_stats,
    default_manifest,
    gen_primitive,
    generate_dataset,
    label_by_edge_distance,
    load_manifest,
    primitive_area,
    primitive_segments,
    realize_entry,
    save_manifest,
    segment_distances,
    segment_distances_brute,
    split_validation,
    to_two_class,
    with_noise,
)
from cloudedges.errors import DataError, ParseError


# ------------------------------------------------------------------ oracles


def unit_cube_edges():
    """The 12 edges of [0,1]^3, built from corner pairs that differ in
    exactly one coordinate."""
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
    edges = []
    for i in range(len(corners)):
        for j in range(i + 1, len(corners)):
            if np.sum(corners[i] != corners[j]) == 1:
                edges.append((corners[i], corners[j]))
    assert len(edges) == 12
    return np.asarray(edges)


def naive_segment_distances(points, segments):
    """Plain per-point, per-segment loop; the reference for everything."""
    points = np.asarray(points, dtype=np.float64)
    segments = np.asarray(segments, dtype=np.float64).reshape(-1, 2, 3)
    out = np.full(len(points), np.inf)
    for k, p in enumerate(points):
        for a, b in segments:
            ab = b - a
            denom = float(ab @ ab)
            if denom == 0.0:
                d = float(np.linalg.norm(p - a))
            else:
                t = min(1.0, max(0.0, float((p - a) @ ab) / denom))
                d = float(np.linalg.norm(p - (a + t * ab)))
            out[k] = min(out[k], d)
    return out


def icosahedron_vertices():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    base = []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            v = (0.0, s1, s2 * phi)
            base.extend([v, (v[2], v[0], v[1]), (v[1], v[2], v[0])])
    verts = np.asarray(base)
    return verts / np.linalg.norm(verts[0])


def dodecahedron_vertices():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    base = [np.array(c, dtype=float)
            for c in itertools.product((-1.0, 1.0), repeat=3)]
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            v = (0.0, s1 / phi, s2 * phi)
            base.extend([np.asarray(v),
                         np.asarray((v[2], v[0], v[1])),
                         np.asarray((v[1], v[2], v[0]))])
    verts = np.asarray(base)
    return verts / np.linalg.norm(verts[0])


def shortest_chord_segments(verts):
    """Polytope edges = vertex pairs at the minimal pairwise distance."""
    diff = verts[:, None, :] - verts[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    dist[dist < 1e-12] = np.inf
    shortest = dist.min()
    pairs = np.argwhere(np.isclose(dist, shortest, atol=1e-9))
    segs = [(verts[i], verts[j]) for i, j in pairs if i < j]
    return np.asarray(segs)


def labels_from_bands(dists, sharp, smooth):
    return np.where(dists <= sharp, 1, np.where(dists <= smooth, 2, 0)).astype(
        np.uint8)


def assert_labels_match_oracle(labels, dists, sharp, smooth):
    """Compare labels away from the band boundaries (a boundary-distance
    point may flip on a 1-ulp difference between two correct distance
    computations)."""
    margin = 1e-9
    safe = np.minimum(np.abs(dists - sharp), np.abs(dists - smooth)) > margin
    assert safe.mean() > 0.999
    expected = labels_from_bands(dists, sharp, smooth)
    np.testing.assert_array_equal(labels[safe], expected[safe])


# ------------------------------------------------- point-segment distances


def test_point_segment_distance_known_values():
    seg = np.array([[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]])
    pts = np.array([
        [1.0, 1.0, 0.0],   # above the middle
        [3.0, 0.0, 0.0],   # beyond the far endpoint
        [-2.0, 0.0, 0.0],  # before the near endpoint
        [0.5, 0.0, 0.0],   # on the segment
    ])
    got = segment_distances_brute(pts, seg)
    np.testing.assert_allclose(got, [1.0, 1.0, 2.0, 0.0], atol=1e-15)

    degenerate = np.array([[[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]])
    got = segment_distances_brute(np.array([[1.0, 1.0, 3.0]]), degenerate)
    np.testing.assert_allclose(got, [2.0], atol=1e-15)


def test_brute_force_matches_naive_loop():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 1.5, (200, 3))
    segs = unit_cube_edges()
    np.testing.assert_allclose(
        segment_distances_brute(pts, segs),
        naive_segment_distances(pts, segs), rtol=0, atol=1e-12)


def test_accelerated_distances_match_brute_force():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.5, 1.5, (1000, 3))
    for segs in (unit_cube_edges(),
                 primitive_segments("cone"),
                 primitive_segments("two_cube")):
        brute = segment_distances_brute(pts, segs)
        fast = segment_distances(pts, segs)
        np.testing.assert_allclose(fast, brute, rtol=0, atol=1e-12)


# ------------------------------------------------------ labeling semantics


def test_label_by_edge_distance_band_semantics():
    segs = unit_cube_edges()
    sharp, smooth = 0.05, 0.15
    pts = np.array([
        [0.5, 0.0, 0.0],                       # exactly on an edge
        [0.5, (sharp + smooth) / 2, 0.0],      # between the bands
        [0.5, 0.5, 0.0],                       # face interior
    ])
    labels = label_by_edge_distance(pts, segs, sharp, smooth)
    assert labels.dtype == np.uint8
    assert labels.tolist() == [1, 2, 0]
    # a PointCloud argument behaves like the raw array
    labels2 = label_by_edge_distance(PointCloud(pts), segs, sharp, smooth)
    np.testing.assert_array_equal(labels, labels2)


def test_label_by_edge_distance_empty_segments_all_nonedge():
    pts = np.random.default_rng(2).uniform(0, 1, (50, 3))
    labels = label_by_edge_distance(pts, np.empty((0, 2, 3)), 0.05, 0.15)
    assert (labels == 0).all()


@pytest.mark.parametrize("sharp,smooth", [(0.0, 0.1), (-0.1, 0.1),
                                          (0.1, 0.1), (0.2, 0.1)])
def test_label_by_edge_distance_rejects_bad_bands(sharp, smooth):
    pts = np.zeros((1, 3))
    with pytest.raises(DataError):
        label_by_edge_distance(pts, unit_cube_edges(), sharp, smooth)


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.floats(0.01, 0.5), st.floats(0.01, 0.5)).map(sorted)
       .filter(lambda t: t[1] > t[0] * 1.0001))
def test_enlarging_sharp_band_never_demotes_sharp(bands):
    small, large = bands
    smooth = large + 0.05
    rng = np.random.default_rng(7)
    pts = rng.uniform(-0.2, 1.2, (300, 3))
    segs = unit_cube_edges()
    before = label_by_edge_distance(pts, segs, small, smooth)
    after = label_by_edge_distance(pts, segs, large, smooth)
    assert (after[before == 1] == 1).all()


# ------------------------------------------------------------- primitives


def test_cube_labels_match_analytic_distance_oracle():
    lab = gen_primitive("cube", 800.0, seed=5, random_pose=False)
    pts = lab.cloud.points
    spacing = mean_spacing(lab.cloud, k=1)
    dists = naive_segment_distances(pts, unit_cube_edges())
    assert_labels_match_oracle(lab.labels, dists, spacing, 3.0 * spacing)
    counts = np.bincount(lab.labels, minlength=3)
    assert (counts > 0).all()


def test_cube_normals_are_exact_axis_units():
    lab = gen_primitive("cube", 500.0, seed=6, random_pose=False)
    normals = lab.cloud.normals
    comps = np.sort(np.abs(normals), axis=1)
    np.testing.assert_array_equal(comps[:, :2], 0.0)
    np.testing.assert_array_equal(comps[:, 2], 1.0)
    # the coordinate along the face axis is exactly 0 or 1
    axis = np.abs(normals).argmax(axis=1)
    along = lab.cloud.points[np.arange(len(lab.labels)), axis]
    assert np.isin(along, (0.0, 1.0)).all()


def test_gen_primitive_is_deterministic():
    a = gen_primitive("cube", 300.0, seed=7)
    b = gen_primitive("cube", 300.0, seed=7)
    np.testing.assert_array_equal(a.cloud.points, b.cloud.points)
    np.testing.assert_array_equal(a.cloud.normals, b.cloud.normals)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.provenance == b.provenance
    c = gen_primitive("cube", 300.0, seed=8)
    assert not np.array_equal(a.cloud.points, c.cloud.points)


def test_gen_primitive_rejects_bad_inputs():
    with pytest.raises(DataError):
        gen_primitive("cube", 0.0, seed=0)
    with pytest.raises(DataError):
        gen_primitive("cube", -5.0, seed=0)
    with pytest.raises(DataError):
        gen_primitive("pyramid", 100.0, seed=0)
    with pytest.raises(DataError):
        gen_primitive("angle", 100.0, seed=0, angle_degrees=0.0)
    with pytest.raises(DataError):
        gen_primitive("angle", 100.0, seed=0, angle_degrees=360.0)


def test_random_pose_is_a_rigid_motion():
    plain = gen_primitive("cube", 400.0, seed=9, random_pose=False)
    posed = gen_primitive("cube", 400.0, seed=9, random_pose=True)
    np.testing.assert_array_equal(plain.labels, posed.labels)
    p, q = plain.cloud.points[:100], posed.cloud.points[:100]
    dists_p = np.linalg.norm(p[:, None] - p[None], axis=-1)
    dists_q = np.linalg.norm(q[:, None] - q[None], axis=-1)
    np.testing.assert_allclose(dists_q, dists_p, atol=1e-9)
    assert not np.allclose(p, q, atol=1e-3)
    # normals rotate with the points
    n_p, n_q = plain.cloud.normals[:100], posed.cloud.normals[:100]
    grams_p = n_p @ n_p.T
    grams_q = n_q @ n_q.T
    np.testing.assert_allclose(grams_q, grams_p, atol=1e-9)
    np.testing.assert_allclose(
        np.einsum("ij,kj->ik", n_q, q - q[:1]),
        np.einsum("ij,kj->ik", n_p, p - p[:1]), atol=1e-9)


def test_angle_180_degrees_is_flat():
    lab = gen_primitive("angle", 500.0, seed=3, angle_degrees=180.0)
    assert (lab.labels == Label.NON_EDGE).all()
    assert primitive_segments("angle", angle_degrees=180.0).shape == (0, 2, 3)


def test_angle_90_degrees_has_a_sharp_crease():
    lab = gen_primitive("angle", 900.0, seed=4, random_pose=False)
    pts = lab.cloud.points
    crease = np.array([[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
    spacing = mean_spacing(lab.cloud, k=1)
    dists = naive_segment_distances(pts, crease)
    assert_labels_match_oracle(lab.labels, dists, spacing, 3.0 * spacing)
    assert (lab.labels == Label.SHARP_EDGE).sum() > 0
    # flat half: normal (0,0,1) and z exactly 0
    flat = np.abs(lab.cloud.normals[:, 2] - 1.0) < 1e-12
    assert flat.sum() > 0
    np.testing.assert_array_equal(pts[flat, 2], 0.0)
    # folded half: normal within fp rounding of (1,0,0) for a right angle
    folded = ~flat
    np.testing.assert_allclose(lab.cloud.normals[folded, 0], 1.0, atol=1e-12)


@pytest.mark.parametrize("kind,vertex_builder", [
    ("icosahedron", icosahedron_vertices),
    ("dodecahedron", dodecahedron_vertices),
])
def test_polytope_samples_lie_on_faces_with_exact_normals(kind,
                                                          vertex_builder):
    verts = vertex_builder()
    hull = ConvexHull(verts)
    lab = gen_primitive(kind, 180.0, seed=12, random_pose=False)
    pts, normals = lab.cloud.points, lab.cloud.normals

    # every sample lies on the hull boundary: max over the face
    # inequalities A.p + b <= 0 is zero
    margins = pts @ hull.equations[:, :3].T + hull.equations[:, 3]
    np.testing.assert_allclose(margins.max(axis=1), 0.0, atol=1e-9)

    # the reported normal is one of the hull face normals, and the point
    # lies on that face's plane
    face_normals = hull.equations[:, :3]
    match = np.einsum("ij,fj->if", normals, face_normals) > 1.0 - 1e-9
    assert match.any(axis=1).all()
    np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0,
                               atol=1e-12)

    # labels agree with distances to the shortest-chord edge set
    segs = shortest_chord_segments(verts)
    assert len(segs) == 30
    spacing = mean_spacing(lab.cloud, k=1)
    dists = naive_segment_distances(pts, segs)
    assert_labels_match_oracle(lab.labels, dists, spacing, 3.0 * spacing)


def test_cone_geometry_normals_and_apex():
    lab = gen_primitive("cone", 3000.0, seed=13, random_pose=False)
    pts, normals = lab.cloud.points, lab.cloud.normals
    apex = np.array([0.0, 0.0, 1.0])
    base = np.abs(normals[:, 2] + 1.0) < 1e-12
    lateral = ~base

    # base disk: z exactly 0, radius at most the base radius
    np.testing.assert_array_equal(pts[base, 2], 0.0)
    assert (np.hypot(pts[base, 0], pts[base, 1]) <= 0.5 + 1e-12).all()

    # lateral surface: radius shrinks linearly toward the apex, and the
    # normal is perpendicular to the slant direction
    r = np.hypot(pts[lateral, 0], pts[lateral, 1])
    np.testing.assert_allclose(r, 0.5 * (1.0 - pts[lateral, 2]), atol=1e-9)
    slant = pts[lateral] - apex
    np.testing.assert_allclose(
        np.einsum("ij,ij->i", slant, normals[lateral]), 0.0, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0,
                               atol=1e-12)

    # the sample closest to the apex is an edge-class point, and the
    # samples hugging the base rim are sharp-edge points
    nearest_apex = np.linalg.norm(pts - apex, axis=1).argmin()
    assert lab.labels[nearest_apex] in (Label.SHARP_EDGE, Label.SMOOTH_EDGE)
    rim = np.abs(np.hypot(pts[:, 0], pts[:, 1]) - 0.5) < 1e-3
    assert rim.any() and (lab.labels[rim] == Label.SHARP_EDGE).all()


def test_two_cube_union_rejects_interior_points():
    lab = gen_primitive("two_cube", 600.0, seed=11, random_pose=False)
    pts = lab.cloud.points
    for lo in (np.zeros(3), np.full(3, 0.5)):
        hi = lo + 1.0
        inside = ((pts > lo + 1e-9) & (pts < hi - 1e-9)).all(axis=1)
        assert not inside.any()
    # realized count tracks the analytic union area
    assert primitive_area("two_cube") == pytest.approx(10.5)
    assert len(pts) == pytest.approx(600.0 * 10.5, rel=0.1)


def test_two_cube_has_concave_contact_creases():
    segs = primitive_segments("two_cube")
    expected = np.array([[1.0, 0.5, 0.5], [1.0, 0.5, 1.0]])
    hit = False
    for a, b in segs:
        if (np.allclose(np.stack([a, b]), expected, atol=1e-12)
                or np.allclose(np.stack([b, a]), expected, atol=1e-12)):
            hit = True
    assert hit, "expected the concave crease x=1, y=0.5, z in [0.5, 1]"

    # points hugging a concave crease are labeled sharp
    lab = gen_primitive("two_cube", 900.0, seed=14, random_pose=False)
    spacing = mean_spacing(lab.cloud, k=1)
    d = naive_segment_distances(lab.cloud.points, expected[None])
    near = d <= spacing
    assert near.any()
    assert (lab.labels[near] == Label.SHARP_EDGE).all()


def test_four_cube_chain_properties():
    lab = gen_primitive("four_cube", 350.0, seed=15, random_pose=False)
    pts = lab.cloud.points
    for k in range(4):
        lo = np.full(3, 0.5 * k)
        hi = lo + 1.0
        inside = ((pts > lo + 1e-9) & (pts < hi - 1e-9)).all(axis=1)
        assert not inside.any()
    assert primitive_area("four_cube") == pytest.approx(19.5)
    assert len(pts) == pytest.approx(350.0 * 19.5, rel=0.1)
    assert (np.bincount(lab.labels, minlength=3) > 0).all()


# ------------------------------------------------------------------- noise


def test_noise_sigma_zero_is_identity():
    cloud = PointCloud(np.random.default_rng(0).uniform(0, 1, (100, 3)))
    out = add_gaussian_noise(cloud, 0.0, seed=1)
    np.testing.assert_array_equal(out.points, cloud.points)


def test_noise_is_deterministic_per_seed():
    cloud = PointCloud(np.random.default_rng(0).uniform(0, 1, (100, 3)))
    a = add_gaussian_noise(cloud, 0.01, seed=3)
    b = add_gaussian_noise(cloud, 0.01, seed=3)
    c = add_gaussian_noise(cloud, 0.01, seed=4)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_isotropic_noise_rms_matches_chi_statistics():
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.uniform(0, 1, (10_000, 3)))
    sigma = 0.01
    noisy = add_gaussian_noise(cloud, sigma, mode="isotropic", seed=6)
    rms = np.sqrt(np.mean(np.sum((noisy.points - cloud.points) ** 2, axis=1)))
    assert abs(rms / (sigma * np.sqrt(3.0)) - 1.0) < 0.05


def test_along_normal_noise_displaces_along_normals_only():
    rng = np.random.default_rng(8)
    normals = rng.standard_normal((10_000, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    cloud = PointCloud(rng.uniform(0, 1, (10_000, 3)), normals)
    sigma = 0.02
    noisy = add_gaussian_noise(cloud, sigma, mode="alongNormal", seed=9)
    disp = noisy.points - cloud.points
    np.testing.assert_allclose(np.cross(disp, normals), 0.0, atol=1e-12)
    rms = np.sqrt(np.mean(np.sum(disp ** 2, axis=1)))
    assert abs(rms / sigma - 1.0) < 0.05
    np.testing.assert_array_equal(noisy.normals, normals)


def test_noise_rejects_bad_arguments():
    cloud = PointCloud(np.zeros((4, 3)) + np.arange(4)[:, None])
    with pytest.raises(DataError):
        add_gaussian_noise(cloud, -0.01, seed=0)
    with pytest.raises(DataError):
        add_gaussian_noise(cloud, 0.01, mode="radial", seed=0)
    with pytest.raises(DataError):
        add_gaussian_noise(cloud, 0.01, mode="alongNormal", seed=0)


def test_with_noise_carries_labels_unchanged():
    lab = gen_primitive("cube", 400.0, seed=16)
    noisy = with_noise(lab, 0.05, seed=17)
    np.testing.assert_array_equal(noisy.labels, lab.labels)
    assert not np.array_equal(noisy.cloud.points, lab.cloud.points)
    assert noisy.provenance["sigma"] == 0.05
    assert lab.provenance["sigma"] == 0.0


# ------------------------------------------------------------ bookkeeping


def test_labeled_cloud_validates_labels():
    cloud = PointCloud(np.random.default_rng(0).uniform(0, 1, (5, 3)))
    with pytest.raises(DataError):
        LabeledCloud(cloud, np.zeros(4, dtype=np.uint8), {})
    with pytest.raises(DataError):
        LabeledCloud(cloud, np.full(5, 3, dtype=np.uint8), {})


def test_dataset_stats_examples():
    cloud = PointCloud(np.random.default_rng(0).uniform(0, 1, (4, 3)))
    all_non = dataset_stats(np.zeros(4, dtype=np.uint8))
    assert all_non["percent"]["non_edge"] == pytest.approx(100.0)
    assert all_non["percent"]["sharp_edge"] == 0.0

    stats = dataset_stats(LabeledCloud(
        cloud, np.array([0, 1, 2, 0], dtype=np.uint8), {}))
    assert stats["total"] == 4
    assert stats["counts"] == {"non_edge": 2, "sharp_edge": 1,
                               "smooth_edge": 1}
    assert abs(sum(stats["percent"].values()) - 100.0) < 0.01


def test_two_cube_sharp_fraction_near_reference_share():
    lab = gen_primitive("two_cube", 550.0, seed=2)
    stats = dataset_stats(lab)
    assert 3.0 <= stats["percent"]["sharp_edge"] <= 12.0


def test_split_validation_trivial_case():
    cloud = PointCloud(np.eye(3))
    lab = LabeledCloud(cloud, np.array([0, 1, 2], dtype=np.uint8), {})
    train_idx, val_idx = split_validation(lab, 1, seed=0)
    assert sorted(val_idx.tolist()) == [0, 1, 2]
    assert sorted(train_idx.tolist()) == [0, 1, 2]


def test_split_validation_is_balanced_and_deterministic():
    rng = np.random.default_rng(21)
    labels = rng.integers(0, 3, 900).astype(np.uint8)
    cloud = PointCloud(rng.uniform(0, 1, (900, 3)))
    lab = LabeledCloud(cloud, labels, {})
    train_idx, val_idx = split_validation(lab, 50, seed=5)
    assert len(val_idx) == 150
    assert len(np.unique(val_idx)) == 150
    counts = np.bincount(labels[val_idx], minlength=3)
    assert counts.tolist() == [50, 50, 50]
    np.testing.assert_array_equal(train_idx, np.arange(900))

    again_t, again_v = split_validation(lab, 50, seed=5)
    np.testing.assert_array_equal(again_v, val_idx)
    _, other = split_validation(lab, 50, seed=6)
    assert not np.array_equal(other, val_idx)


def test_split_validation_rejects_small_classes():
    cloud = PointCloud(np.random.default_rng(0).uniform(0, 1, (10, 3)))
    labels = np.array([0] * 8 + [1, 2], dtype=np.uint8)
    lab = LabeledCloud(cloud, labels, {})
    with pytest.raises(DataError):
        split_validation(lab, 2, seed=0)


def test_to_two_class_mappings():
    labels = np.array([0, 1, 2, 1, 2], dtype=np.uint8)
    as_non = to_two_class(labels)
    np.testing.assert_array_equal(as_non, [0, 1, 0, 1, 0])
    as_sharp = to_two_class(labels, smooth_to="sharp_edge")
    np.testing.assert_array_equal(as_sharp, [0, 1, 1, 1, 1])
    assert as_non.dtype == np.uint8
    with pytest.raises(DataError):
        to_two_class(labels, smooth_to="edgeish")


# --------------------------------------------------------------- manifests


def test_default_manifest_shape_and_size():
    entries = default_manifest()
    assert all(e["role"] in ("train", "val", "eval") for e in entries)
    assert {e["role"] for e in entries} >= {"train", "eval"}
    names = [e["name"] for e in entries]
    assert len(names) == len(set(names))
    generators = {e["generator"] for e in entries}
    assert generators >= {"cube", "two_cube", "cone", "icosahedron",
                          "dodecahedron", "angle"}
    total = sum(
        e["parameters"]["samples_per_unit_area"]
        * primitive_area(e["generator"],
                         e["parameters"].get("angle_degrees", 90.0))
        for e in entries)
    assert 35_000 <= total <= 60_000
    sigmas = sorted({e["sigma"] for e in entries})
    assert 0.0 in sigmas and 0.01 in sigmas and 0.1 in sigmas


def test_manifest_roundtrip_and_validation(tmp_path):
    entries = default_manifest()
    path = tmp_path / "manifest.json"
    save_manifest(entries, path)
    assert load_manifest(path) == entries

    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "broken.json")

    bad = [dict(entries[0])]
    del bad[0]["generator"]
    save_manifest(bad, tmp_path / "missing.json")
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "missing.json")

    worse = [dict(entries[0], role="test")]
    save_manifest(worse, tmp_path / "role.json")
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "role.json")


def tiny_manifest():
    return [
        {"name": "cube-noisy", "generator": "cube",
         "parameters": {"samples_per_unit_area": 120.0}, "sigma": 0.01,
         "seed": 31, "role": "train",
         "files": {"cloud": "cube-noisy.ply", "labels": "cube-noisy.labels"}},
        {"name": "angle-clean", "generator": "angle",
         "parameters": {"samples_per_unit_area": 100.0,
                        "angle_degrees": 90.0}, "sigma": 0.0,
         "seed": 32, "role": "eval",
         "files": {"cloud": "angle-clean.ply",
                   "labels": "angle-clean.labels"}},
    ]


def test_generate_dataset_writes_reloadable_files(tmp_path):
    entries = tiny_manifest()
    made = generate_dataset(entries, tmp_path)
    assert len(made) == 2
    for entry, lab in zip(entries, made):
        cloud = load_cloud(tmp_path / entry["files"]["cloud"])
        labels = load_labels(tmp_path / entry["files"]["labels"])
        # the container stores 32-bit floats
        np.testing.assert_allclose(cloud.points, lab.cloud.points,
                                   atol=1e-6)
        np.testing.assert_array_equal(labels, lab.labels)
    # the noisy entry displaces points but keeps noise-free labels
    clean = realize_entry(dict(entries[0], sigma=0.0))
    np.testing.assert_array_equal(made[0].labels, clean.labels)
    assert not np.array_equal(made[0].cloud.points, clean.cloud.points)


def test_generate_dataset_reruns_bit_identically(tmp_path):
    entries = tiny_manifest()
    first, second = tmp_path / "a", tmp_path / "b"
    first.mkdir()
    second.mkdir()
    generate_dataset(entries, first)
    generate_dataset(entries, second)
    for entry in entries:
        for key in ("cloud", "labels"):
            a = (first / entry["files"][key]).read_bytes()
            b = (second / entry["files"][key]).read_bytes()
            assert a == b
