"""Logarithmic neighborhood-scale sampling.

Scales form a geometric sequence from s_min to s_max so that the step is
uniform in log space; derivatives across scales can then use plain central
differences in ln t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..cloud import bbox_diagonal, mean_spacing


@dataclass(frozen=True)
class ScaleSampling:
    scales: np.ndarray

    @property
    def n(self):
        return int(self.scales.shape[0])

    @property
    def s_min(self):
        return float(self.scales[0])

    @property
    def s_max(self):
        return float(self.scales[-1])

    @property
    def log_step(self):
        """ln(s_{i+1} / s_i), constant by construction."""
        if self.n < 2:
            raise DataError("log_step needs at least 2 scales")
        return float(np.log(self.scales[1] / self.scales[0]))


def build_scale_sampling(cloud=None, n=16, s_min=None, s_max=None) -> ScaleSampling:
    """Geometric scale ladder; defaults derive s_min from the mean 10-neighbor
    spacing and s_max from 10% of the bounding box diagonal."""
    if s_min is None or s_max is None:
        if cloud is None:
            raise DataError("either a cloud or explicit s_min and s_max required")
        if s_min is None:
            s_min = mean_spacing(cloud, k=10)
        if s_max is None:
            s_max = 0.1 * bbox_diagonal(cloud)
    s_min = float(s_min)
    s_max = float(s_max)
    n = int(n)
    if not (np.isfinite(s_min) and s_min > 0):
        raise DataError(f"s_min must be positive, got {s_min}")
    if not (np.isfinite(s_max) and s_max > s_min):
        raise DataError(f"s_max must exceed s_min, got {s_max} <= {s_min}")
    if n < 2:
        raise DataError(f"need at least 2 scales, got {n}")
    i = np.arange(n, dtype=np.float64)
    scales = s_min * (s_max / s_min) ** (i / (n - 1))
    scales[0] = s_min   # endpoints exact regardless of fp rounding
    scales[-1] = s_max
    return ScaleSampling(scales)
