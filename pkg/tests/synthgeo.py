"""Synthetic point clouds with analytically known geometry, for tests.

These generators are deliberately independent of the package's own data
module so they can serve as oracles for it and for the descriptor code.
"""

import numpy as np

from cloudedges.cloud import PointCloud


def fibonacci_sphere(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Near-uniform sphere sampling; normals point outward."""
    i = np.arange(n, dtype=np.float64) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azimuth = np.pi * (1.0 + np.sqrt(5.0)) * i
    dirs = np.column_stack([
        np.sin(polar) * np.cos(azimuth),
        np.sin(polar) * np.sin(azimuth),
        np.cos(polar),
    ])
    points = np.asarray(center, dtype=np.float64) + radius * dirs
    return PointCloud(points, dirs.copy())


def plane_grid(nx=40, ny=40, spacing=0.1, jitter=0.0, seed=0):
    """Grid on z = 0 with +z normals; optional in-plane jitter."""
    xs = (np.arange(nx) - (nx - 1) / 2.0) * spacing
    ys = (np.arange(ny) - (ny - 1) / 2.0) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])
    if jitter > 0:
        rng = np.random.default_rng(seed)
        pts[:, :2] += rng.uniform(-jitter, jitter, size=(nx * ny, 2)) * spacing
    nrm = np.zeros_like(pts)
    nrm[:, 2] = 1.0
    return PointCloud(pts, nrm)


def cylinder_grid(radius=1.0, half_length=3.0, spacing=0.05):
    """Open cylinder around the z axis; normals point outward radially."""
    n_theta = int(round(2.0 * np.pi * radius / spacing))
    n_z = int(round(2.0 * half_length / spacing)) + 1
    theta = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    zs = np.linspace(-half_length, half_length, n_z)
    tt, zz = np.meshgrid(theta, zs, indexing="ij")
    tt = tt.ravel()
    zz = zz.ravel()
    nrm = np.column_stack([np.cos(tt), np.sin(tt), np.zeros(tt.size)])
    pts = radius * nrm + np.column_stack(
        [np.zeros(tt.size), np.zeros(tt.size), zz])
    return PointCloud(pts, nrm)


def cube_faces(side=2.0, per_edge=12, jitter=0.0, seed=0):
    """Cell-centered samples of all six faces of an axis-aligned cube
    centered at the origin; normals are the outward face normals."""
    h = side / per_edge
    u = (np.arange(per_edge) + 0.5) * h - side / 2.0
    gu, gv = np.meshgrid(u, u, indexing="ij")
    gu = gu.ravel()
    gv = gv.ravel()
    rng = np.random.default_rng(seed)
    pts = []
    nrm = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            p = np.empty((gu.size, 3))
            p[:, axis] = sign * side / 2.0
            p[:, (axis + 1) % 3] = gu
            p[:, (axis + 2) % 3] = gv
            if jitter > 0:
                j = rng.uniform(-jitter, jitter, size=(gu.size, 2)) * h
                p[:, (axis + 1) % 3] += j[:, 0]
                p[:, (axis + 2) % 3] += j[:, 1]
            n = np.zeros((gu.size, 3))
            n[:, axis] = sign
            pts.append(p)
            nrm.append(n)
    return PointCloud(np.vstack(pts), np.vstack(nrm))


def random_rotation(seed=0):
    """Uniformly random rotation matrix (3, 3)."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rigid_transform(cloud, rotation, translation):
    """Apply x -> R x + t to points and R to normals."""
    pts = cloud.points @ rotation.T + np.asarray(translation, dtype=np.float64)
    nrm = cloud.normals @ rotation.T if cloud.has_normals else None
    return PointCloud(pts, nrm)


def separable_toy(n_plane=576, n_small=400, n_big=500):
    """Three well-separated surface patches with trivially distinguishable
    descriptor signatures: a flat plane (class 0), a high-curvature sphere
    (class 1), and a low-curvature sphere (class 2).

    The patches sit far apart relative to any reasonable analysis scale, so
    no neighborhood mixes two classes; a classifier that reads curvature at
    all should reach ~100% on this cloud.  Returns (cloud, labels).
    """
    side = int(round(np.sqrt(n_plane)))
    plane = plane_grid(side, side, spacing=0.1)
    small = fibonacci_sphere(n_small, radius=0.35, center=(0.0, 0.0, 2.5))
    big = fibonacci_sphere(n_big, radius=1.0, center=(3.5, 0.0, 2.5))
    points = np.vstack([plane.points, small.points, big.points])
    normals = np.vstack([plane.normals, small.normals, big.normals])
    labels = np.repeat(
        np.array([0, 1, 2], dtype=np.uint8),
        [len(plane), n_small, n_big])
    return PointCloud(points, normals), labels
