"""Classification scoring: confusion counts, the six standard scores,
multi-cloud aggregation, and time/energy accounting.

The positive class is either the sharp-edge class alone ("sharp_only")
or the union of sharp- and smooth-edge classes ("sharp_plus_smooth",
marked "+" in reports). All scores are plain functions of the four
confusion cells.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

POSITIVE_RULES = ("sharp_only", "sharp_plus_smooth")

_RULE_POSITIVES = {"sharp_only": (1,), "sharp_plus_smooth": (1, 2)}
RULE_DISPLAY = {"sharp_only": "sharp", "sharp_plus_smooth": "sharp+"}

SCORE_KEYS = ("precision", "recall", "f1", "mcc", "accuracy", "iou")

REPORT_COLUMNS = ("cloud", "rule", "TP", "TN", "FP", "FN") + SCORE_KEYS


@dataclass(frozen=True)
class ConfusionCounts:
    """The four confusion cells; they sum to the evaluated point count."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name, value in (("tp", self.tp), ("tn", self.tn),
                            ("fp", self.fp), ("fn", self.fn)):
            if int(value) != value or value < 0:
                raise DataError(f"{name} must be a non-negative count, "
                                f"got {value}")
            object.__setattr__(self, name, int(value))

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(predicted, ground_truth, rule="sharp_only", *,
              positive_classes=None) -> ConfusionCounts:
    """Count TP/TN/FP/FN after binarizing both label arrays with the
    same positive-class set (from `rule`, or given explicitly)."""
    predicted = np.asarray(predicted)
    ground_truth = np.asarray(ground_truth)
    if predicted.shape != ground_truth.shape or predicted.ndim != 1:
        raise DataError(
            f"label arrays must be equal-length vectors, got "
            f"{predicted.shape} vs {ground_truth.shape}")
    if positive_classes is None:
        if rule not in _RULE_POSITIVES:
            raise DataError(f"rule must be one of {POSITIVE_RULES}, "
                            f"got {rule!r}")
        positive_classes = _RULE_POSITIVES[rule]
    p_pos = np.isin(predicted, positive_classes)
    t_pos = np.isin(ground_truth, positive_classes)
    return ConfusionCounts(
        tp=int(np.sum(p_pos & t_pos)),
        tn=int(np.sum(~p_pos & ~t_pos)),
        fp=int(np.sum(p_pos & ~t_pos)),
        fn=int(np.sum(~p_pos & t_pos)),
    )


def scores(c: ConfusionCounts) -> dict:
    """The six standard scores of a confusion matrix. Any score whose
    denominator is zero is reported as 0 and flips the `degenerate`
    flag."""
    if c.total == 0:
        raise DataError("cannot score an empty confusion matrix")
    degenerate = False

    def ratio(num, den):
        nonlocal degenerate
        if den == 0:
            degenerate = True
            return 0.0
        return num / den

    # python ints keep the 4-term product exact for any cloud size
    mcc_den_sq = ((c.tp + c.fp) * (c.tp + c.fn)
                  * (c.tn + c.fp) * (c.tn + c.fn))
    out = {
        "precision": ratio(c.tp, c.tp + c.fp),
        "recall": ratio(c.tp, c.tp + c.fn),
        "f1": ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        "mcc": (ratio(c.tp * c.tn - c.fp * c.fn, math.sqrt(mcc_den_sq))
                if mcc_den_sq else ratio(0, 0)),
        "accuracy": ratio(c.tp + c.tn, c.total),
        "iou": ratio(c.tp, c.tp + c.fp + c.fn),
    }
    out["degenerate"] = degenerate
    return out


def aggregate(per_cloud_scores) -> dict:
    """Combine score dicts from many clouds: per-metric medians (the
    lower median for even counts, so the value always comes from a real
    cloud) plus the (precision, recall) point set for scatter plots."""
    rows = list(per_cloud_scores)
    if not rows:
        raise DataError("aggregate needs at least one cloud")
    median = {}
    for key in SCORE_KEYS:
        values = sorted(row[key] for row in rows)
        median[key] = values[(len(values) - 1) // 2]
    points = [(row["precision"], row["recall"]) for row in rows]
    return {"median": median, "points": points}


@dataclass(frozen=True)
class EnergyReport:
    """Normalized processing cost: t_k is seconds per 1000 points, e_k
    the corresponding Joules at the processor's rated power draw."""

    tdp_watts: float
    processing_seconds: float
    point_count: int
    t_k: float
    e_k: float


def energy_report(tdp_watts, processing_seconds, point_count) -> EnergyReport:
    tdp_watts = float(tdp_watts)
    processing_seconds = float(processing_seconds)
    point_count = int(point_count)
    if tdp_watts <= 0 or processing_seconds <= 0 or point_count <= 0:
        raise DataError("energy report inputs must all be positive")
    t_k = processing_seconds * 1000.0 / point_count
    return EnergyReport(tdp_watts, processing_seconds, point_count,
                        t_k, tdp_watts * t_k)


# ----------------------------------------------------------------- report


def evaluation_row(cloud_name, rule, counts: ConfusionCounts) -> dict:
    """One report row: identification, raw counts, and all scores."""
    s = scores(counts)
    row = {"cloud": cloud_name, "rule": RULE_DISPLAY.get(rule, rule),
           "TP": counts.tp, "TN": counts.tn, "FP": counts.fp,
           "FN": counts.fn}
    row.update({key: s[key] for key in SCORE_KEYS})
    return row


def write_report_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row[key] for key in REPORT_COLUMNS})


def write_report_json(rows, path) -> None:
    with open(path, "w") as fh:
        json.dump(list(rows), fh, indent=2)
        fh.write("\n")


def write_pr_points_csv(points, path) -> None:
    """Precision/recall pairs for external scatter plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["precision", "recall"])
        writer.writerows(points)
