"""Covariance-analysis edge score: a fast single-scale baseline.

For each point, take itself plus its k nearest neighbors, form the
covariance of the positions, and compute the surface-variation ratio
lambda_0 / (lambda_0 + lambda_1 + lambda_2) with lambda_0 the smallest
eigenvalue. Flat neighborhoods score near zero; neighborhoods straddling
a crease score high. Scores are rescaled by the cloud-wide maximum so the
decision threshold is data-independent.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError

DEFAULT_K = 10
DEFAULT_THRESHOLD = 0.65


def edge_score_covariance(cloud, k: int = DEFAULT_K) -> np.ndarray:
    """Surface-variation score per point, rescaled to max 1.0."""
    m = len(cloud)
    if m <= k:
        raise DataError(f"need more than {k} points, got {m}")
    idx = cloud.index().k_nearest(cloud.points, k + 1)
    nbhd = cloud.points[idx]                      # (M, k+1, 3)
    centered = nbhd - nbhd.mean(axis=1, keepdims=True)
    cov = np.einsum("mka,mkb->mab", centered, centered) / (k + 1)
    eig = np.linalg.eigvalsh(cov)                 # ascending
    trace = eig.sum(axis=1)
    ratio = np.where(trace > 0, eig[:, 0] / np.where(trace > 0, trace, 1.0),
                     0.0)
    peak = ratio.max()
    if peak > 0:
        ratio = ratio / peak
    return ratio


def classify_covariance(cloud, k: int = DEFAULT_K,
                        threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Two-class labels (0 = surface, 1 = edge) from the covariance score."""
    return (edge_score_covariance(cloud, k=k) >= threshold).astype(np.uint8)
