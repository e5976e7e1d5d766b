"""Labeled point clouds and dataset bookkeeping.

Labels use fixed integer codes (the on-disk and on-the-wire format):
0 = non-edge, 1 = sharp-edge, 2 = smooth-edge.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..cloud import PointCloud
from ..errors import DataError


class Label(enum.IntEnum):
    NON_EDGE = 0
    SHARP_EDGE = 1
    SMOOTH_EDGE = 2


LABEL_NAMES = {Label.NON_EDGE: "non_edge",
               Label.SHARP_EDGE: "sharp_edge",
               Label.SMOOTH_EDGE: "smooth_edge"}


@dataclass
class LabeledCloud:
    """A point cloud with per-point class labels and the recipe that
    produced it (generator, parameters, noise sigma, seed)."""

    cloud: PointCloud
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != (len(self.cloud),):
            raise DataError(
                f"labels must be ({len(self.cloud)},), got {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > 2):
            raise DataError("labels must use codes 0, 1, 2")
        self.labels = labels.astype(np.uint8)

    def __len__(self):
        return len(self.cloud)


def _as_labels(labeled) -> np.ndarray:
    labels = getattr(labeled, "labels", labeled)
    return np.asarray(labels)


def dataset_stats(labeled) -> dict:
    """Per-class counts and percentages; counts sum to the point count
    and percentages to 100."""
    labels = _as_labels(labeled)
    total = int(labels.size)
    if total == 0:
        raise DataError("no labels to summarize")
    counts = np.bincount(labels.astype(np.int64), minlength=3)
    return {
        "total": total,
        "counts": {LABEL_NAMES[Label(c)]: int(counts[c]) for c in range(3)},
        "percent": {LABEL_NAMES[Label(c)]: 100.0 * counts[c] / total
                    for c in range(3)},
    }


def split_validation(labeled, per_class, seed=0):
    """Pick `per_class` monitoring points per class from within the
    training data; returns (train indices = everything, validation
    indices). The validation subset is not held out of training."""
    labels = _as_labels(labeled)
    per_class = int(per_class)
    if per_class <= 0:
        raise DataError(f"per_class must be >= 1, got {per_class}")
    rng = np.random.default_rng(seed)
    chosen = []
    for cls in np.unique(labels):
        members = np.nonzero(labels == cls)[0]
        if members.size < per_class:
            raise DataError(
                f"class {int(cls)} has {members.size} points, "
                f"need {per_class}")
        chosen.append(rng.choice(members, per_class, replace=False))
    val_idx = np.sort(np.concatenate(chosen))
    train_idx = np.arange(labels.size, dtype=np.intp)
    return train_idx, val_idx.astype(np.intp)


def to_two_class(labels, smooth_to="non_edge") -> np.ndarray:
    """Collapse 3-class labels to binary edge/non-edge. Smooth-edge
    points become non-edge by default, or sharp-edge for the inclusive
    evaluation variant."""
    labels = np.asarray(labels)
    if smooth_to == "non_edge":
        smooth_value = 0
    elif smooth_to == "sharp_edge":
        smooth_value = 1
    else:
        raise DataError(
            f"smooth_to must be 'non_edge' or 'sharp_edge', got {smooth_to!r}")
    out = np.where(labels == Label.SHARP_EDGE, 1,
                   np.where(labels == Label.SMOOTH_EDGE, smooth_value, 0))
    return out.astype(np.uint8)
