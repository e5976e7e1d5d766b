"""Gaussian perturbation of point positions.

Labels are always computed on the noise-free geometry and carried over,
so ground truth stays fixed while the inputs degrade.
"""

from __future__ import annotations

import numpy as np

from ..cloud import PointCloud
from ..errors import DataError
from .dataset import LabeledCloud

NOISE_MODES = ("isotropic", "alongNormal")


def add_gaussian_noise(cloud: PointCloud, sigma, mode="isotropic",
                       seed=0) -> PointCloud:
    """Displace each point by N(0, sigma^2) per axis (isotropic) or by
    sigma * N(0,1) along its normal. Normals are left unchanged."""
    sigma = float(sigma)
    if sigma < 0.0:
        raise DataError(f"sigma must be >= 0, got {sigma}")
    if mode not in NOISE_MODES:
        raise DataError(f"noise mode must be one of {NOISE_MODES}, "
                        f"got {mode!r}")
    if mode == "alongNormal" and not cloud.has_normals:
        raise DataError("alongNormal noise requires normals")

    normals = None if cloud.normals is None else cloud.normals.copy()
    if sigma == 0.0:
        return PointCloud(cloud.points.copy(), normals)

    rng = np.random.default_rng(seed)
    if mode == "isotropic":
        points = cloud.points + rng.normal(0.0, sigma, cloud.points.shape)
    else:
        amount = sigma * rng.standard_normal((len(cloud), 1))
        points = cloud.points + amount * cloud.normals
    return PointCloud(points, normals)


def with_noise(labeled: LabeledCloud, sigma, mode="isotropic",
               seed=0) -> LabeledCloud:
    """Noisy copy of a labeled cloud; labels stay those of the
    noise-free geometry."""
    noisy = add_gaussian_noise(labeled.cloud, sigma, mode=mode, seed=seed)
    provenance = dict(labeled.provenance)
    provenance.update(sigma=float(sigma), noise_mode=mode,
                      noise_seed=int(seed))
    return LabeledCloud(noisy, labeled.labels.copy(), provenance)
