"""Vectorized sphere/plane fitting for many evaluation points at once.

Everything here works in frames centered on each evaluation point (see
sphere.py for why) and on CSR-style neighbor lists, so one numpy call chain
serves thousands of fits. Results are coefficient arrays; segment i is the
fit around centers[i].
"""

from __future__ import annotations

import numpy as np

from .sphere import (FD_STEP, GRAD_EPS, MIN_NEIGHBORS, PLANE_EPS,
                     AlgebraicSphere)


def ball_neighbors(tree, centers, radius):
    """CSR neighbor lists: (flat indices, per-center counts)."""
    lists = tree.query_ball_point(centers, radius, return_sorted=True)
    counts = np.fromiter((len(l) for l in lists), dtype=np.int64,
                         count=len(lists))
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), counts
    flat = np.empty(total, dtype=np.int64)
    pos = 0
    for l in lists:
        n = len(l)
        flat[pos:pos + n] = l
        pos += n
    return flat, counts


def fit_batch(points, normals, flat, counts, centers, radius, plane=False):
    """Fit one normalized algebraic sphere (or covariance plane) per center.

    Returns a dict of arrays, coefficients expressed in the local frame of
    each center: uc (K,), ul (K,3), uq (K,), phi (K,), count (K,),
    valid (K,) bool.
    """
    k = centers.shape[0]
    seg = np.repeat(np.arange(k), counts)
    q = points[flat] - centers[seg]
    d2 = np.einsum("ij,ij->i", q, q)
    r2 = radius * radius
    w = 1.0 - d2 / r2
    np.maximum(w, 0.0, out=w)
    w *= w

    sw = np.bincount(seg, weights=w, minlength=k)
    npos = np.bincount(seg[w > 0], minlength=k)
    ok = (npos >= MIN_NEIGHBORS) & (sw > 0)
    sw_safe = np.where(sw > 0, sw, 1.0)

    def mean_of(vals):
        return np.bincount(seg, weights=w * vals, minlength=k) / sw_safe

    mq = np.column_stack([mean_of(q[:, a]) for a in range(3)])
    nrm_seg = normals[flat]

    if plane:
        uc, ul, uq = _plane_coeffs(q, nrm_seg, w, seg, k, sw_safe, mq)
    else:
        mn = np.column_stack([mean_of(nrm_seg[:, a]) for a in range(3)])
        m_qn = mean_of(np.einsum("ij,ij->i", q, nrm_seg))
        m_qq = mean_of(d2)
        denom = m_qq - np.einsum("ij,ij->i", mq, mq)
        degenerate = np.abs(denom) < PLANE_EPS * r2
        denom_safe = np.where(degenerate, 1.0, denom)
        uq = np.where(degenerate, 0.0,
                      0.5 * (m_qn - np.einsum("ij,ij->i", mq, mn)) / denom_safe)
        ul = mn - 2.0 * uq[:, None] * mq
        uc = -np.einsum("ij,ij->i", mq, ul) - uq * m_qq
        # Pratt normalization; planes (uq == 0) normalize the linear term
        pratt2 = np.einsum("ij,ij->i", ul, ul) - 4.0 * uc * uq
        is_plane = uq == 0.0
        lin = np.linalg.norm(ul, axis=1)
        norm2 = np.where(is_plane, lin * lin, pratt2)
        ok &= np.isfinite(norm2) & (norm2 > GRAD_EPS * GRAD_EPS)
        norm = np.sqrt(np.where(ok, norm2, 1.0))
        uc = uc / norm
        ul = ul / norm[:, None]
        uq = uq / norm

    s_at = uc[seg] + np.einsum("ij,ij->i", q, ul[seg]) + uq[seg] * d2
    phi = np.bincount(seg, weights=w * s_at * s_at, minlength=k) / (sw_safe * r2)

    bad = ~ok
    if bad.any():
        uc[bad] = 0.0
        ul[bad] = 0.0
        uq[bad] = 0.0
        phi[bad] = 0.0
    return {"uc": uc, "ul": ul, "uq": uq, "phi": phi,
            "count": npos, "valid": ok}


def _plane_coeffs(q, nrm_seg, w, seg, k, sw_safe, mq):
    """Weighted covariance plane per segment, oriented by the mean normal."""
    c = q - mq[seg]
    cov = np.empty((k, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            acc = np.bincount(seg, weights=w * c[:, a] * c[:, b],
                              minlength=k) / sw_safe
            cov[:, a, b] = acc
            cov[:, b, a] = acc
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, :, 0]
    mn = np.column_stack([
        np.bincount(seg, weights=w * nrm_seg[:, a], minlength=k) / sw_safe
        for a in range(3)])
    sign = np.where(np.einsum("ij,ij->i", normal, mn) < 0.0, -1.0, 1.0)
    normal *= sign[:, None]
    uc = -np.einsum("ij,ij->i", mq, normal)
    uq = np.zeros(k)
    return uc, normal, uq


def project_origin(uc, ul, uq, valid):
    """Orthogonal projection of each local frame origin onto its fit
    (displacement vectors, zero where invalid).

    At the origin S = uc and grad S = ul, so the stable gradient-form
    projection (see project_to_sphere) is -2 uc ul / (|ul| (|ul| + sqrt(p)))
    with p the Pratt norm; no sphere center is ever constructed, which keeps
    near-plane fits (tiny uq) from catapulting the iterate.
    """
    pratt2 = np.maximum(
        np.einsum("ij,ij->i", ul, ul) - 4.0 * uc * uq, 0.0)
    gnorm = np.linalg.norm(ul, axis=1)
    tiny = gnorm < GRAD_EPS
    denom = np.where(tiny, np.maximum(np.sqrt(pratt2), GRAD_EPS),
                     gnorm * (gnorm + np.sqrt(pratt2)))
    scale = np.where(valid, -2.0 * uc / denom, 0.0)
    disp = scale[:, None] * ul
    if (tiny & valid).any():
        # at the exact center: move radially up by convention
        rows = tiny & valid
        disp[rows] = 0.0
        disp[rows, 2] = scale[rows]
    return disp


def mls_project_batch(points, normals, tree, starts, radius, plane=False,
                      max_iterations=10, tolerance=1e-4):
    """Batched {fit, project} iteration from each start position.

    Returns (positions, fit dict in frames `fit_centers`, fit_centers,
    iteration counts, converged mask). Invalid fits freeze their point and
    mark it invalid.
    """
    k = starts.shape[0]
    pos = starts.astype(np.float64).copy()
    fit_centers = starts.astype(np.float64).copy()
    out = {"uc": np.zeros(k), "ul": np.zeros((k, 3)), "uq": np.zeros(k),
           "phi": np.zeros(k), "count": np.zeros(k, dtype=np.int64),
           "valid": np.zeros(k, dtype=bool)}
    converged = np.zeros(k, dtype=bool)
    iterations = np.zeros(k, dtype=np.int64)
    active = np.arange(k)
    for _ in range(max_iterations):
        if active.size == 0:
            break
        iterations[active] += 1
        flat, counts = ball_neighbors(tree, pos[active], radius)
        fit = fit_batch(points, normals, flat, counts, pos[active], radius,
                        plane=plane)
        for key in ("uc", "uq", "phi", "count", "valid"):
            out[key][active] = fit[key]
        out["ul"][active] = fit["ul"]
        fit_centers[active] = pos[active]

        disp = project_origin(fit["uc"], fit["ul"], fit["uq"], fit["valid"])
        pos[active] += disp
        step = np.linalg.norm(disp, axis=1)
        done = (step < tolerance * radius) & fit["valid"]
        converged[active] |= done
        active = active[~done & fit["valid"]]
    return pos, out, fit_centers, iterations, converged


def tangent_frames(points, flat, counts, centers, radius, eta):
    """Per-center orthonormal frame (t1, t2, eta), shape (K, 3, 3).

    t1 and t2 are the in-plane eigenvectors (descending eigenvalue) of the
    weighted neighborhood covariance projected onto the plane normal to eta.
    The frame is derived from the geometry alone, so it rotates with the
    cloud; finite differences taken along it keep their truncation error
    pose-independent, unlike differences along the global axes.
    """
    k = centers.shape[0]
    seg = np.repeat(np.arange(k), counts)
    q = points[flat] - centers[seg]
    d2 = np.einsum("ij,ij->i", q, q)
    w = 1.0 - d2 / (radius * radius)
    np.maximum(w, 0.0, out=w)
    w *= w
    sw = np.bincount(seg, weights=w, minlength=k)
    sw_safe = np.where(sw > 0, sw, 1.0)
    mq = np.column_stack([
        np.bincount(seg, weights=w * q[:, a], minlength=k) / sw_safe
        for a in range(3)])
    c = q - mq[seg]
    cov = np.empty((k, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            acc = np.bincount(seg, weights=w * c[:, a] * c[:, b],
                              minlength=k) / sw_safe
            cov[:, a, b] = acc
            cov[:, b, a] = acc
    proj = np.eye(3)[None] - np.einsum("ki,kj->kij", eta, eta)
    cov_t = np.einsum("kab,kbc,kcd->kad", proj, cov, proj)
    cov_t = 0.5 * (cov_t + cov_t.transpose(0, 2, 1))
    _, vecs = np.linalg.eigh(cov_t)     # ascending eigenvalues
    frames = np.empty((k, 3, 3))
    frames[:, 0] = vecs[:, :, 2]
    frames[:, 1] = vecs[:, :, 1]
    frames[:, 2] = eta
    return frames


def eta_jacobian_batch(points, normals, tree, centers, radius, eta,
                       plane=False, with_field_derivs=False):
    """Central-difference derivatives of the fitted (tau, eta, kappa) fields.

    For each center, six offset refits at distance h = FD_STEP * radius along
    the tangent frame from `tangent_frames`. One ball query of radius
    radius + h serves all offsets because the fit weights vanish beyond
    `radius`. Entries are scale-normalized: jac_n = radius * d(eta)/dx.

    Returns a dict: jac_n (K, 3, 3), ok (K,) — all six offset fits valid —
    and, when requested, dtau/dkappa (K, 3) as radius * d(tau_n, kappa_n)/dx.
    """
    k = centers.shape[0]
    h = FD_STEP * radius
    flat, counts = ball_neighbors(tree, centers, radius + h)
    frames = tangent_frames(points, flat, counts, centers, radius, eta)

    eta_pm = np.empty((3, 2, k, 3))
    tau_pm = np.empty((3, 2, k))
    kappa_pm = np.empty((3, 2, k))
    ok = np.ones(k, dtype=bool)
    for d in range(3):
        v = frames[:, d, :]
        for si, sgn in enumerate((1.0, -1.0)):
            offset_centers = centers + sgn * h * v
            fit = fit_batch(points, normals, flat, counts, offset_centers,
                            radius, plane=plane)
            gnorm = np.linalg.norm(fit["ul"], axis=1)
            ok &= fit["valid"] & (gnorm >= GRAD_EPS)
            gsafe = np.where(gnorm > 0, gnorm, 1.0)
            eta_pm[d, si] = fit["ul"] / gsafe[:, None]
            tau_pm[d, si] = fit["uc"] / radius
            kappa_pm[d, si] = 2.0 * fit["uq"] * radius

    # d/d(dir): (plus - minus) / (2h); the extra `radius` normalization
    # cancels h = FD_STEP * radius into a pure 1 / (2 FD_STEP)
    d_eta = (eta_pm[:, 0] - eta_pm[:, 1]) / (2.0 * FD_STEP)
    jac_n = np.einsum("dka,kdb->kab", d_eta, frames)
    out = {"jac_n": jac_n, "ok": ok}
    if with_field_derivs:
        d_tau = (tau_pm[:, 0] - tau_pm[:, 1]) / (2.0 * FD_STEP)
        d_kappa = (kappa_pm[:, 0] - kappa_pm[:, 1]) / (2.0 * FD_STEP)
        out["dtau"] = np.einsum("dk,kdb->kb", d_tau, frames)
        out["dkappa"] = np.einsum("dk,kdb->kb", d_kappa, frames)
    return out


def principal_curvatures(jac_n, eta):
    """Two dominant curvature magnitudes from a scale-normalized eta
    jacobian: eigenvalues of the symmetrized tangent-projected jacobian,
    sorted by magnitude. Returns (k1, k2) arrays."""
    proj = np.eye(3)[None] - np.einsum("ki,kj->kij", eta, eta)
    shape_op = np.einsum("kab,kbc,kcd->kad", proj, jac_n, proj)
    shape_op = 0.5 * (shape_op + shape_op.transpose(0, 2, 1))
    eigvals = np.linalg.eigvalsh(shape_op)
    mags = np.sort(np.abs(eigvals), axis=1)
    return mags[:, 2], mags[:, 1]


def sphere_from_local(fit, centers, row) -> AlgebraicSphere:
    """One row of a local-frame fit dict as an absolute-frame sphere."""
    count = int(fit["count"][row])
    if not fit["valid"][row]:
        out = AlgebraicSphere.invalid()
        out.neighbor_count = count
        return out
    c = centers[row]
    uq = float(fit["uq"][row])
    ul = fit["ul"][row]
    return AlgebraicSphere(
        u_c=float(fit["uc"][row] - ul @ c + uq * float(c @ c)),
        u_l=ul - 2.0 * uq * c,
        u_q=uq,
        normalized=True,
        valid=True,
        residual=float(fit["phi"][row]),
        neighbor_count=count,
    )
