"""Algebraic sphere fitting and moving-least-squares projection.

The local surface around an evaluation point is modeled by the scalar field

    S(x) = u_c + u_l . x + u_q (x . x)

fitted to neighboring points and their oriented normals with the compactly
supported weight w(d) = (1 - (d/r)^2)^2 for d < r. After Pratt
normalization (||u_l||^2 - 4 u_c u_q = 1) the field value approximates the
signed distance to the zero set, and u_q encodes mean curvature.

Fits are computed in coordinates centered on the query point: the sums
<p.p> - pbar.pbar cancel catastrophically when the cloud is far from the
origin, and centering makes them scale-sized. Coefficients are shifted back
afterwards (the Pratt norm is shift-invariant).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

# fewer neighbors cannot constrain the 5 sphere parameters reliably
MIN_NEIGHBORS = 6
# |<q.q> - qbar.qbar| below this (relative to r^2) means "no quadratic term"
PLANE_EPS = 1e-12
# gradient shorter than this cannot be normalized into a unit normal
GRAD_EPS = 1e-12
# finite-difference step for spatial derivatives, as a fraction of the scale
FD_STEP = 0.05


@dataclass
class AlgebraicSphere:
    """Scalar-field sphere; u_q == 0 degenerates to a plane."""

    u_c: float = 0.0
    u_l: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u_q: float = 0.0
    normalized: bool = False
    valid: bool = True
    residual: float = 0.0        # weighted mean squared field value / r^2
    neighbor_count: int = 0

    @staticmethod
    def invalid():
        return AlgebraicSphere(valid=False)


def eval_field(sphere: AlgebraicSphere, x):
    """S(x); x is one point or an (Q, 3) block."""
    x = np.asarray(x, dtype=np.float64)
    quad = (x * x).sum(axis=-1)
    return sphere.u_c + x @ sphere.u_l + sphere.u_q * quad


def eval_gradient(sphere: AlgebraicSphere, x):
    """grad S(x) = u_l + 2 u_q x."""
    x = np.asarray(x, dtype=np.float64)
    return sphere.u_l + 2.0 * sphere.u_q * x


def normalize_sphere(sphere: AlgebraicSphere) -> AlgebraicSphere:
    """Pratt-normalize; planes (u_q == 0) normalize the linear term instead.
    A non-positive Pratt norm marks the result invalid."""
    if not sphere.valid:
        return AlgebraicSphere.invalid()
    if sphere.normalized:
        return sphere
    if sphere.u_q == 0.0:
        norm = float(np.linalg.norm(sphere.u_l))
        if norm < GRAD_EPS:
            return AlgebraicSphere.invalid()
    else:
        pratt2 = float(sphere.u_l @ sphere.u_l - 4.0 * sphere.u_c * sphere.u_q)
        if not np.isfinite(pratt2) or pratt2 <= 0.0:
            return AlgebraicSphere.invalid()
        norm = float(np.sqrt(pratt2))
    return AlgebraicSphere(
        u_c=sphere.u_c / norm,
        u_l=sphere.u_l / norm,
        u_q=sphere.u_q / norm,
        normalized=True,
        valid=True,
        residual=sphere.residual,
        neighbor_count=sphere.neighbor_count,
    )


def fit_sphere(cloud, index, center, radius) -> AlgebraicSphere:
    """Weighted closed-form algebraic sphere fit at `center` with support
    `radius`. Returns a Pratt-normalized sphere; fewer than MIN_NEIGHBORS
    supporting points yields an invalid result."""
    if not cloud.has_normals:
        raise DataError("sphere fitting needs oriented normals")
    if radius <= 0:
        raise DataError(f"radius must be positive, got {radius}")
    center = np.asarray(center, dtype=np.float64)
    idx = np.asarray(index.neighbors_in_ball(center, radius), dtype=np.int64)
    sphere = _fit_centered(cloud.points[idx], cloud.normals[idx], center, radius)
    return sphere


def _fit_centered(pts, nrm, center, radius) -> AlgebraicSphere:
    q = pts - center
    d2 = np.einsum("ij,ij->i", q, q)
    w = 1.0 - d2 / (radius * radius)
    np.maximum(w, 0.0, out=w)
    w *= w
    pos = w > 0.0
    count = int(np.count_nonzero(pos))
    if count < MIN_NEIGHBORS:
        out = AlgebraicSphere.invalid()
        out.neighbor_count = count
        return out

    sw = w.sum()
    mq = (w[:, None] * q).sum(axis=0) / sw
    mn = (w[:, None] * nrm).sum(axis=0) / sw
    m_qn = float((w * np.einsum("ij,ij->i", q, nrm)).sum() / sw)
    m_qq = float((w * d2).sum() / sw)

    denom = m_qq - float(mq @ mq)
    if abs(denom) < PLANE_EPS * radius * radius:
        u_q = 0.0
        u_l = mn.copy()
        u_c = float(-mq @ u_l)
    else:
        u_q = 0.5 * (m_qn - float(mq @ mn)) / denom
        u_l = mn - 2.0 * u_q * mq
        u_c = float(-mq @ u_l) - u_q * m_qq

    raw = AlgebraicSphere(u_c=u_c, u_l=u_l, u_q=u_q, neighbor_count=count)
    unit = normalize_sphere(raw)
    if not unit.valid:
        unit.neighbor_count = count
        return unit

    s_at = unit.u_c + q @ unit.u_l + unit.u_q * d2
    unit.residual = float((w * s_at * s_at).sum() / (sw * radius * radius))
    unit.neighbor_count = count

    # shift the frame back to absolute coordinates
    u_l_abs = unit.u_l - 2.0 * unit.u_q * center
    u_c_abs = unit.u_c - float(unit.u_l @ center) + unit.u_q * float(center @ center)
    unit.u_l = u_l_abs
    unit.u_c = u_c_abs
    return unit


def project_to_sphere(sphere: AlgebraicSphere, x):
    """Orthogonal projection of x onto the zero set of the sphere.

    Uses the gradient form -2 S(x) g / (|g| (|g| + sqrt(pratt))), which never
    constructs the geometric center -u_l / (2 u_q); that center diverges as
    u_q -> 0 and subtracting it back out cancels catastrophically. This form
    degrades smoothly into the exact plane projection.
    """
    x = np.asarray(x, dtype=np.float64)
    s_val = float(eval_field(sphere, x))
    g = eval_gradient(sphere, x)
    gnorm = float(np.linalg.norm(g))
    pratt2 = max(float(sphere.u_l @ sphere.u_l
                       - 4.0 * sphere.u_c * sphere.u_q), 0.0)
    if gnorm < GRAD_EPS:
        # at the exact center: move radially up by convention
        direction = np.array([0.0, 0.0, 1.0])
        return x - (2.0 * s_val / max(np.sqrt(pratt2), GRAD_EPS)) * direction
    return x - (2.0 * s_val / (gnorm * (gnorm + np.sqrt(pratt2)))) * g


@dataclass
class MlsResult:
    position: np.ndarray
    sphere: AlgebraicSphere
    iterations: int
    converged: bool


def mls_project(cloud, index, x, radius, max_iterations=10,
                tolerance=1e-4) -> MlsResult:
    """Repeated {fit, orthogonal project} until the iterate moves less than
    tolerance * radius or the iteration cap is hit.

    Single-start front end over the batched iteration, so one- and
    many-point projections follow bit-identical trajectories.
    """
    # local import; batch builds on the primitives defined in this module
    from .batch import mls_project_batch, sphere_from_local

    if not cloud.has_normals:
        raise DataError("MLS projection needs oriented normals")
    if radius <= 0:
        raise DataError(f"radius must be positive, got {radius}")
    start = np.asarray(x, dtype=np.float64).reshape(1, 3)
    pos, fit, centers, iterations, converged = mls_project_batch(
        cloud.points, cloud.normals, index.tree, start, radius,
        max_iterations=max_iterations, tolerance=tolerance)
    return MlsResult(pos[0], sphere_from_local(fit, centers, 0),
                     int(iterations[0]), bool(converged[0]))
