"""Scale-space matrices: per-point feature rows across a ladder of scales.

A matrix holds M points x N scales x P features (float32). Feature layouts
are fixed per feature set; every layout is a subset of the 28-wide "full"
layout, so a full matrix can be sliced down without refitting.

Full layout (28 columns):
  0 tau | 1..3 eta | 4 kappa | 5 k1 | 6 k2 | 7 phi |
  8..27 derivative block: rows (tau, eta_x, eta_y, eta_z, kappa) x
  columns (d/dx, d/dy, d/dz, d/dln t), row-major.

All entries are dimensionless: tau is divided by t, curvatures multiplied
by t, spatial derivatives are taken per unit of t, scale derivatives per
unit of ln t. The Full28 layout is the only one that is not invariant under
rigid motions (eta and its derivatives rotate with the cloud).

Binary cache format (little-endian):
  magic "SSM1" | u32 M, N, P | u8 feature-set id | u8 fit-method id |
  f64 s_min, s_max | M*N*P float32 row-major | u32 skip count | u32 indices
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, ParseError
from .batch import (ball_neighbors, eta_jacobian_batch, fit_batch,
                    mls_project_batch, principal_curvatures)
from .gls import scale_derivatives
from .sampling import ScaleSampling, build_scale_sampling
from .sphere import GRAD_EPS

_MAGIC = b"SSM1"

_DERIV_KEYS = tuple(
    f"{q}:{c}"
    for q in ("tau", "eta_x", "eta_y", "eta_z", "kappa")
    for c in ("dx", "dy", "dz", "dt")
)
_FULL_KEYS = ("tau", "eta_x", "eta_y", "eta_z", "kappa", "k1", "k2", "phi") \
    + _DERIV_KEYS


class FeatureSet(enum.Enum):
    FULL28 = ("full28", 0, _FULL_KEYS)
    INVARIANT7 = ("invariant7", 1,
                  ("tau", "kappa", "k1", "k2", "tau:dt", "kappa:dt", "phi"))
    STANDARD6 = ("standard6", 2,
                 ("tau", "kappa", "k1", "tau:dt", "kappa:dt", "phi"))
    NOSCALE4 = ("noscale4", 3, ("tau", "kappa", "k1", "phi"))
    NOCURVATURE3 = ("nocurvature3", 4, ("tau", "tau:dt", "phi"))

    def __init__(self, label, wire_id, keys):
        self.label = label
        self.wire_id = wire_id
        self.keys = keys

    @property
    def width(self):
        return len(self.keys)

    @classmethod
    def from_label(cls, label):
        for fs in cls:
            if fs.label == label:
                return fs
        raise DataError(f"unknown feature set {label!r}")

    @classmethod
    def from_wire(cls, wire_id):
        for fs in cls:
            if fs.wire_id == wire_id:
                return fs
        raise DataError(f"unknown feature set id {wire_id}")


class FitMethod(enum.Enum):
    COVARIANCE_PLANE = ("covariance_plane", 0, True, False)
    PLANE_MLS = ("plane_mls", 1, True, True)
    SPHERE = ("sphere", 2, False, False)
    APSS = ("apss", 3, False, True)

    def __init__(self, label, wire_id, plane, mls):
        self.label = label
        self.wire_id = wire_id
        self.plane = plane
        self.mls = mls

    @classmethod
    def from_label(cls, label):
        for fm in cls:
            if fm.label == label:
                return fm
        raise DataError(f"unknown fit method {label!r}")

    @classmethod
    def from_wire(cls, wire_id):
        for fm in cls:
            if fm.wire_id == wire_id:
                return fm
        raise DataError(f"unknown fit method id {wire_id}")


@dataclass
class ScaleSpaceMatrix:
    values: np.ndarray          # (M, N, P) float32
    feature_set: FeatureSet
    fit_method: FitMethod
    s_min: float
    s_max: float
    skipped: np.ndarray         # sorted indices of all-invalid points

    @property
    def num_points(self):
        return self.values.shape[0]

    @property
    def num_scales(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]

    def sampling(self) -> ScaleSampling:
        return build_scale_sampling(n=self.num_scales, s_min=self.s_min,
                                    s_max=self.s_max)

    def select(self, feature_set: FeatureSet) -> "ScaleSpaceMatrix":
        """Slice the stored columns down to another feature set."""
        if feature_set is self.feature_set:
            return self
        try:
            cols = [self.feature_set.keys.index(k) for k in feature_set.keys]
        except ValueError as missing:
            raise DataError(
                f"{self.feature_set.label} does not contain all columns of "
                f"{feature_set.label}") from missing
        return ScaleSpaceMatrix(
            values=np.ascontiguousarray(self.values[:, :, cols]),
            feature_set=feature_set,
            fit_method=self.fit_method,
            s_min=self.s_min,
            s_max=self.s_max,
            skipped=self.skipped.copy(),
        )


def save_ssm(ssm: ScaleSpaceMatrix, path):
    m, n, p = ssm.values.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", m, n, p))
        fh.write(struct.pack("<BB", ssm.feature_set.wire_id,
                             ssm.fit_method.wire_id))
        fh.write(struct.pack("<dd", ssm.s_min, ssm.s_max))
        fh.write(np.ascontiguousarray(ssm.values, dtype="<f4").tobytes())
        skipped = np.asarray(ssm.skipped, dtype="<u4")
        fh.write(struct.pack("<I", skipped.size))
        fh.write(skipped.tobytes())


def load_ssm(path) -> ScaleSpaceMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ParseError("bad magic; not a scale-space matrix file", path=path)
    try:
        m, n, p = struct.unpack_from("<III", data, 4)
        fs_id, fm_id = struct.unpack_from("<BB", data, 16)
        s_min, s_max = struct.unpack_from("<dd", data, 18)
        off = 34
        nval = m * n * p
        values = np.frombuffer(data, dtype="<f4", count=nval, offset=off)
        off += 4 * nval
        (nskip,) = struct.unpack_from("<I", data, off)
        off += 4
        skipped = np.frombuffer(data, dtype="<u4", count=nskip, offset=off)
        off += 4 * nskip
    except (struct.error, ValueError) as err:
        raise ParseError(f"truncated file: {err}", path=path) from None
    if off != len(data):
        raise ParseError(
            f"size mismatch: expected {off} bytes, file has {len(data)}",
            path=path)
    fs = FeatureSet.from_wire(fs_id)
    if fs.width != p:
        raise ParseError(
            f"feature set {fs.label} expects {fs.width} columns, file has {p}",
            path=path)
    return ScaleSpaceMatrix(
        values=values.reshape(m, n, p).copy(),
        feature_set=fs,
        fit_method=FitMethod.from_wire(fm_id),
        s_min=float(s_min),
        s_max=float(s_max),
        skipped=skipped.astype(np.int64),
    )


# --------------------------------------------------------------- builder


def build_ssm(cloud, sampling: ScaleSampling | None = None,
              feature_set: FeatureSet = FeatureSet.STANDARD6,
              fit_method: FitMethod = FitMethod.APSS,
              progress=None, entry_budget=3_000_000) -> ScaleSpaceMatrix:
    """Fit every point at every scale and assemble feature rows.

    Invalid (point, scale) fits copy the nearest valid scale of the same
    point; points with no valid scale at all become zero rows and land on
    the skip list.
    """
    if not cloud.has_normals:
        raise DataError("scale-space matrices need oriented normals")
    if sampling is None:
        sampling = build_scale_sampling(cloud)
    m = len(cloud)
    n = sampling.n
    needs_k1 = any(k in feature_set.keys for k in ("k1", "k2")) \
        or feature_set is FeatureSet.FULL28
    full = feature_set is FeatureSet.FULL28

    tau = np.zeros((n, m))
    kappa = np.zeros((n, m))
    phi = np.zeros((n, m))
    k1 = np.zeros((n, m)) if needs_k1 else None
    k2 = np.zeros((n, m)) if needs_k1 else None
    eta = np.zeros((n, m, 3)) if full else None
    dtau_dx = np.zeros((n, m, 3)) if full else None
    dkappa_dx = np.zeros((n, m, 3)) if full else None
    deta_dx = np.zeros((n, m, 3, 3)) if full else None
    valid = np.zeros((n, m), dtype=bool)

    tree = cloud.index().tree
    points = cloud.points
    normals = cloud.normals
    total_steps = 0
    done_steps = 0

    # probe neighborhood sizes once per scale on a fixed point subset to
    # bound memory per chunk
    probe = points[:: max(1, m // 64)][:64]
    chunk_sizes = []
    for t in sampling.scales:
        counts = tree.query_ball_point(probe, t, return_length=True)
        avg = max(float(np.mean(counts)), 1.0)
        chunk_sizes.append(int(np.clip(entry_budget / avg, 256, 16384)))
        total_steps += (m + chunk_sizes[-1] - 1) // chunk_sizes[-1]

    for j, t in enumerate(sampling.scales):
        chunk = chunk_sizes[j]
        for start in range(0, m, chunk):
            stop = min(start + chunk, m)
            sel = slice(start, stop)
            p_chunk = points[sel]

            if fit_method.mls:
                _, fit, centers, _, _ = mls_project_batch(
                    points, normals, tree, p_chunk, t, plane=fit_method.plane)
            else:
                flat, counts = ball_neighbors(tree, p_chunk, t)
                fit = fit_batch(points, normals, flat, counts, p_chunk, t,
                                plane=fit_method.plane)
                centers = p_chunk

            e = p_chunk - centers
            e2 = np.einsum("ij,ij->i", e, e)
            s_at = fit["uc"] + np.einsum("ij,ij->i", e, fit["ul"]) \
                + fit["uq"] * e2
            grad = fit["ul"] + 2.0 * fit["uq"][:, None] * e
            gnorm = np.linalg.norm(grad, axis=1)
            row_ok = fit["valid"] & (gnorm >= GRAD_EPS)
            gsafe = np.where(gnorm > 0, gnorm, 1.0)

            tau[j, sel] = np.where(row_ok, s_at / t, 0.0)
            kappa[j, sel] = np.where(row_ok, 2.0 * fit["uq"] * t, 0.0)
            phi[j, sel] = np.where(row_ok, fit["phi"], 0.0)
            valid[j, sel] = row_ok
            eta_c = grad / gsafe[:, None]
            if full:
                eta[j, sel] = np.where(row_ok[:, None], eta_c, 0.0)

            if needs_k1:
                _jacobian_block(
                    points, normals, tree, p_chunk, t, eta_c, row_ok,
                    fit_method, kappa[j, sel],
                    k1[j, sel], k2[j, sel],
                    dtau_dx[j, sel] if full else None,
                    dkappa_dx[j, sel] if full else None,
                    deta_dx[j, sel] if full else None)

            done_steps += 1
            if progress is not None:
                progress(done_steps / total_steps)

    # backfill invalid scales from the nearest valid one
    skipped = _backfill(valid, [a for a in (tau, kappa, phi, k1, k2, eta,
                                            dtau_dx, dkappa_dx, deta_dx)
                                if a is not None])

    # derivatives across scales (on backfilled series)
    dtau_dt, _ = scale_derivatives(tau, sampling)
    dkappa_dt, _ = scale_derivatives(kappa, sampling)

    columns = {
        "tau": tau, "kappa": kappa, "phi": phi,
        "tau:dt": dtau_dt, "kappa:dt": dkappa_dt,
    }
    if needs_k1:
        columns["k1"] = k1
        columns["k2"] = k2
    if full:
        deta_dt, _ = scale_derivatives(eta.reshape(n, -1), sampling)
        deta_dt = deta_dt.reshape(n, m, 3)
        for a, axis in enumerate("xyz"):
            columns[f"eta_{axis}"] = eta[:, :, a]
            columns[f"tau:d{axis}"] = dtau_dx[:, :, a]
            columns[f"kappa:d{axis}"] = dkappa_dx[:, :, a]
            columns[f"eta_{axis}:dt"] = deta_dt[:, :, a]
            for b, baxis in enumerate("xyz"):
                columns[f"eta_{axis}:d{baxis}"] = deta_dx[:, :, a, b]

    out = np.empty((m, n, feature_set.width), dtype=np.float32)
    for c, key in enumerate(feature_set.keys):
        out[:, :, c] = columns[key].T.astype(np.float32)
    if skipped.size:
        out[skipped] = 0.0

    return ScaleSpaceMatrix(
        values=out,
        feature_set=feature_set,
        fit_method=fit_method,
        s_min=sampling.s_min,
        s_max=sampling.s_max,
        skipped=skipped,
    )


def _jacobian_block(points, normals, tree, p_chunk, t, eta_c, row_ok,
                    fit_method, kappa_row, k1_row, k2_row,
                    dtau_row, dkappa_row, deta_row):
    """Spatial-derivative features for one chunk at one scale, written into
    the provided row views. Offsets that fail to fit fall back to an
    isotropic jacobian built from the base kappa."""
    need_fields = dtau_row is not None
    out = eta_jacobian_batch(points, normals, tree, p_chunk, t, eta_c,
                             plane=fit_method.plane,
                             with_field_derivs=need_fields)
    jac_n = out["jac_n"]
    iso = ~out["ok"] & row_ok
    if iso.any():
        proj = np.eye(3)[None] - np.einsum("ki,kj->kij", eta_c, eta_c)
        jac_n[iso] = kappa_row[iso, None, None] * proj[iso]
    k1, k2 = principal_curvatures(jac_n, eta_c)
    k1_row[:] = np.where(row_ok, k1, 0.0)
    k2_row[:] = np.where(row_ok, k2, 0.0)

    if need_fields:
        dtau = out["dtau"]
        dkap = out["dkappa"]
        bad = ~row_ok
        for arr in (dtau, dkap):
            arr[iso] = 0.0
            arr[bad] = 0.0
        jac_store = jac_n.copy()
        jac_store[bad] = 0.0
        dtau_row[:] = dtau
        dkappa_row[:] = dkap
        deta_row[:] = jac_store


def _backfill(valid, quantity_arrays):
    """Replace invalid scale entries with the nearest valid scale of the
    same point. Returns the sorted indices of points with no valid scale."""
    n, m = valid.shape
    any_valid = valid.any(axis=0)
    skipped = np.flatnonzero(~any_valid).astype(np.int64)

    fixable = np.flatnonzero(any_valid & ~valid.all(axis=0))
    if fixable.size:
        dist = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]).astype(float)
        for pt in fixable:
            col = valid[:, pt]
            penal = dist + np.where(col, 0.0, np.inf)[None, :]
            donor = np.argmin(penal, axis=1)
            rows = np.flatnonzero(~col)
            for arr in quantity_arrays:
                arr[rows, pt] = arr[donor[rows], pt]
    if skipped.size:
        for arr in quantity_arrays:
            arr[:, skipped] = 0.0
    return skipped
