"""Scale-normalized geometric features derived from a local fit.

From a normalized fit S at evaluation point p and scale t:

    tau   = S(p) / t          relief: signed offset of p from the local surface
    eta   = grad S / |grad S| unit surface normal of the fit
    kappa = 2 u_q * t         mean curvature, scale-normalized

Principal curvature magnitudes k1 >= k2 come from finite differences of the
eta field projected onto the tangent plane. Derivatives across scales are
taken with respect to ln t (the scale ladder is uniform in log space).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .sphere import (FD_STEP, GRAD_EPS, AlgebraicSphere, eval_field,
                     eval_gradient, fit_sphere)


@dataclass
class GlsSample:
    tau: float = 0.0
    eta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kappa: float = 0.0
    phi: float = 0.0
    valid: bool = True


def gls_reparameterize(sphere: AlgebraicSphere, p, t) -> GlsSample:
    """Turn a normalized fit into scale-normalized (tau, eta, kappa, phi)."""
    if t <= 0:
        raise DataError(f"scale must be positive, got {t}")
    if not sphere.valid:
        return GlsSample(valid=False)
    if not sphere.normalized:
        raise DataError("gls_reparameterize expects a normalized fit")
    p = np.asarray(p, dtype=np.float64)
    grad = eval_gradient(sphere, p)
    norm = float(np.linalg.norm(grad))
    if norm < GRAD_EPS:
        return GlsSample(valid=False)
    return GlsSample(
        tau=float(eval_field(sphere, p)) / t,
        eta=grad / norm,
        kappa=2.0 * sphere.u_q * t,
        phi=sphere.residual,
        valid=True,
    )


def spatial_normal_jacobian(cloud, index, p, t, fit=fit_sphere, plane=False):
    """Central-difference jacobian of the eta field at p, plus the two
    dominant principal curvature magnitudes (scale-normalized).

    Offsets of h = FD_STEP * t are taken along a tangent frame derived from
    the neighborhood geometry (not the global axes), each re-fitted at scale
    t; frame-aligned differences keep the truncation error independent of
    the cloud's pose. Any invalid offset fit falls back to an isotropic
    estimate built from the base sample's kappa.

    Returns (jac 3x3, k1, k2, valid) where jac is the raw d(eta)/dx.
    """
    # local import; batch builds on the primitives of this module's siblings
    from .batch import eta_jacobian_batch, principal_curvatures

    p = np.asarray(p, dtype=np.float64)
    base = fit(cloud, index, p, t)
    base_gls = gls_reparameterize(base, p, t)
    if not base_gls.valid:
        return np.zeros((3, 3)), 0.0, 0.0, False
    eta = base_gls.eta
    out = eta_jacobian_batch(cloud.points, cloud.normals, index.tree,
                             p[None, :], t, eta[None, :], plane=plane)
    jac_n = out["jac_n"]
    if not out["ok"][0]:
        jac_n = (base_gls.kappa * (np.eye(3) - np.outer(eta, eta)))[None]
    k1, k2 = principal_curvatures(jac_n, eta[None, :])
    return jac_n[0] / t, float(k1[0]), float(k2[0]), True


def scale_derivatives(values, sampling):
    """d(values)/d(ln t) along axis 0 for per-scale quantities.

    Central differences inside, one-sided at the ends. With two scales the
    single forward difference fills both rows. Fewer than two scales yields
    zeros and a flag.

    Returns (derivatives, well_defined).
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n != sampling.n:
        raise DataError(
            f"values have {n} scales but sampling has {sampling.n}")
    if n < 2:
        return np.zeros_like(values), False
    step = sampling.log_step
    out = np.empty_like(values)
    if n == 2:
        diff = (values[1] - values[0]) / step
        out[0] = diff
        out[1] = diff
        return out, True
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * step)
    out[0] = (values[1] - values[0]) / step
    out[-1] = (values[-1] - values[-2]) / step
    return out, True
