#!/usr/bin/env python3
"""
Detection quality: segment labels, adjusted Rand index, hit rates and
change-point count histograms.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.metrics import adjusted_rand_score, rand_score

logger = logging.getLogger(__name__)

COUNT_BINS = (2, 3, 4, 5, 6)


@dataclass(frozen=True, eq=False)
class Segmentation:
    """labels[t - 1] = number of change-points before t."""
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty vector")
        steps = np.diff(labels)
        if labels[0] != 0 or np.any((steps != 0) & (steps != 1)):
            raise ValueError("labels must start at 0 and rise by exactly 1 at each change-point")

    @property
    def T(self) -> int:
        return len(self.labels)

    @property
    def changepoints(self) -> List[int]:
        return [int(t) for t in np.flatnonzero(np.diff(self.labels)) + 1]


def segmentation_labels(change_points: Sequence[int], T: int) -> Segmentation:
    cps = sorted(int(c) for c in change_points)
    if len(set(cps)) != len(cps):
        raise ValueError(f"duplicate change-points in {cps}")
    if any(not 0 < c < T for c in cps):
        raise ValueError(f"change-points must lie strictly inside (0, {T}), got {cps}")
    labels = np.searchsorted(np.array(cps, dtype=np.int64), np.arange(1, T + 1), side="left")
    return Segmentation(labels=labels)


def _check_pair(a: Segmentation, b: Segmentation):
    if a.T != b.T:
        raise ValueError(f"segmentations differ in length: {a.T} vs {b.T}")
    if a.T < 2:
        raise ValueError("need at least two time points to compare segmentations")


def adjusted_rand_index(a: Segmentation, b: Segmentation) -> float:
    """Hubert-Arabie adjusted Rand index; 1.0 when both sides are a single segment."""
    _check_pair(a, b)
    return float(adjusted_rand_score(a.labels, b.labels))


def rand_index(a: Segmentation, b: Segmentation) -> float:
    _check_pair(a, b)
    return float(rand_score(a.labels, b.labels))


def nearest_estimate(detections: Sequence[int], truth: int) -> Optional[int]:
    """Detection closest to truth, the earlier one on ties; None when nothing was detected."""
    if not detections:
        return None
    return min(sorted(detections), key=lambda d: abs(d - truth))


def hit_rate(estimates: Sequence[Optional[int]], truth: int, k: float) -> float:
    if k < 0:
        raise ValueError(f"tolerance must be nonnegative, got {k}")
    if not estimates:
        return 0.0
    hits = sum(1 for est in estimates if est is not None and abs(est - truth) <= k)
    return hits / len(estimates)


def count_histogram(counts: Sequence[int], aris: Optional[Sequence[float]] = None) -> Dict[str, float]:
    """Replicate counts of estimated change-points; the outer bins collect <=2 and >=6."""
    row: Dict[str, float] = {}
    clipped = np.clip(np.asarray(counts, dtype=int), COUNT_BINS[0], COUNT_BINS[-1])
    for b in COUNT_BINS:
        label = f"<={b}" if b == COUNT_BINS[0] else f">={b}" if b == COUNT_BINS[-1] else str(b)
        row[label] = int(np.count_nonzero(clipped == b))
    row["reps"] = len(counts)
    if aris is not None:
        row["mean_ari"] = float(np.mean(aris)) if len(aris) else math.nan
    return row


def detection_metrics(detections: Sequence[int], truth: Sequence[int], T: int,
                      ks: Sequence[int] = (3, 10)) -> dict:
    """Counts, partition agreement and per-change hit flags for one detection run."""
    est = segmentation_labels(detections, T)
    true = segmentation_labels(truth, T)
    metrics = {
        "T": T,
        "n_detected": len(detections),
        "n_true": len(truth),
        "ari": adjusted_rand_index(true, est),
        "rand_index": rand_index(true, est),
    }
    per_change = []
    for tau in sorted(truth):
        nearest = nearest_estimate(detections, tau)
        entry = {"tau": tau, "nearest": nearest,
                 "distance": None if nearest is None else abs(nearest - tau)}
        for k in ks:
            entry[f"hit_k{k}"] = nearest is not None and abs(nearest - tau) <= k
        per_change.append(entry)
    for k in ks:
        flags = [entry[f"hit_k{k}"] for entry in per_change]
        metrics[f"hit_k{k}"] = sum(flags) / len(flags) if flags else math.nan
    metrics["per_change"] = per_change
    return metrics
