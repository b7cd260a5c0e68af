#!/usr/bin/env python3
"""
Two-step change-point detection.

Step one screens the approximating sets scale by scale, finest first, and
stops at the first scale whose best penalised score reaches the threshold.
Step two refines the firing window by scoring every interior split point.
Detection then recurses on the two sides of the estimate.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.processors.covariance import CovarianceKernel
from src.processors.scoring import SeriesMatrix, SparsityParams, penalized_scores
from src.processors.windows import (WindowSchedule, approximating_arrays, max_scale,
                                    schedule_log_complexity)

logger = logging.getLogger(__name__)

NO_SCORE = -math.inf


@dataclass(frozen=True)
class DetectionConfig:
    threshold: float
    params: SparsityParams
    kernel: CovarianceKernel
    schedule: WindowSchedule
    i0_default: int = 1

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold}")
        if self.i0_default < 1:
            raise ValueError("i0 must be at least 1")

    def describe(self) -> dict:
        return {
            "threshold": self.threshold,
            "lambda1": self.params.lambda1,
            "lambda2": self.params.lambda2,
            "N": self.params.N,
            "i0": self.i0_default,
            "kernel": self.kernel.describe(),
            "schedule": self.schedule.describe(),
        }


@dataclass(frozen=True)
class Detection:
    tau: int
    scale: int
    score: float


@dataclass
class ScanDiagnostics:
    triples_evaluated: int = 0
    first_pass_triples: int = 0
    guard_floor_count: int = 0
    segments_scanned: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {
            "triples_evaluated": self.triples_evaluated,
            "first_pass_triples": self.first_pass_triples,
            "guard_floor_count": self.guard_floor_count,
            "segments_scanned": self.segments_scanned,
        }


@dataclass
class ChangePointReport:
    detections: List[Detection]
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def changepoints(self) -> List[int]:
        return [d.tau for d in self.detections]

    def to_dict(self) -> dict:
        return {
            "changepoints": [{"t": d.tau, "scale": d.scale, "score": d.score} for d in self.detections],
            "config": self.config,
            "diagnostics": self.diagnostics,
        }

    def to_rows(self) -> List[dict]:
        return [{"t": d.tau, "scale": d.scale, "score": d.score} for d in self.detections]


def _check_data(data: SeriesMatrix, cfg: DetectionConfig):
    if data.N != cfg.params.N:
        raise ValueError(f"sparsity parameters set for N={cfg.params.N}, data has N={data.N}")
    if cfg.schedule.T is not None and cfg.schedule.T < data.T:
        raise ValueError(f"schedule built for T={cfg.schedule.T}, data has T={data.T}")
    if cfg.kernel.length is not None and cfg.kernel.length < data.T:
        raise ValueError(f"custom kernel covers {cfg.kernel.length} points, data has T={data.T}")


def _scale_scores(data: SeriesMatrix, cfg: DetectionConfig, i: int, b: int, e: int,
                  diagnostics: ScanDiagnostics):
    """Scores over A_i(g) for segment b..e, with global triples."""
    g = e - b + 1
    k, s, t, u = approximating_arrays(cfg.schedule, i, g)
    offset = b - 1
    s, t, u = s + offset, t + offset, u + offset
    scores, floored = penalized_scores(data, cfg.kernel, cfg.params, data.T, s, t, u)
    diagnostics.triples_evaluated += scores.size
    diagnostics.guard_floor_count += floored
    return scores, k, s, t, u


def scan_scale(data: SeriesMatrix, cfg: DetectionConfig, i: int, b: int, e: int,
               diagnostics: Optional[ScanDiagnostics] = None) -> Tuple[float, int]:
    """(max penalised score over A_i(g), its offset k); (-inf, 0) for an empty set."""
    diagnostics = diagnostics if diagnostics is not None else ScanDiagnostics()
    scores, k, _, _, _ = _scale_scores(data, cfg, i, b, e, diagnostics)
    if scores.size == 0:
        return NO_SCORE, 0
    # argmax returns the first maximum: smallest k on ties
    j = int(np.argmax(scores))
    return float(scores[j]), int(k[j])


def _refine(data: SeriesMatrix, cfg: DetectionConfig, s: int, u: int,
            diagnostics: ScanDiagnostics) -> Tuple[int, float]:
    t = np.arange(s + 1, u, dtype=np.int64)
    scores, floored = penalized_scores(data, cfg.kernel, cfg.params, data.T,
                                       np.full(t.size, s), t, np.full(t.size, u))
    diagnostics.triples_evaluated += scores.size
    diagnostics.guard_floor_count += floored
    best = int(np.argmax(scores))
    return int(t[best]), float(scores[best])


def sl_estimate(data: SeriesMatrix, cfg: DetectionConfig, i0: int, b: int, e: int,
                diagnostics: Optional[ScanDiagnostics] = None) -> Optional[Detection]:
    """Screen segment b..e (1-based, inclusive) from scale i0 upward; refine at the first firing scale."""
    if i0 < 1:
        raise ValueError("i0 must be at least 1")
    if not 1 <= b <= e <= data.T:
        raise ValueError(f"segment ({b}, {e}) outside 1..{data.T}")
    diagnostics = diagnostics if diagnostics is not None else ScanDiagnostics()
    diagnostics.segments_scanned += 1

    g = e - b + 1
    i_g = max_scale(cfg.schedule, g)
    for i in range(i0, i_g + 1):
        scores, _, s, _, u = _scale_scores(data, cfg, i, b, e, diagnostics)
        if scores.size == 0:
            continue
        j = int(np.argmax(scores))
        if scores[j] >= cfg.threshold:
            tau, score = _refine(data, cfg, int(s[j]), int(u[j]), diagnostics)
            logger.debug(f"segment ({b}, {e}) fired at scale {i}: tau={tau}, score={score:.3f}")
            return Detection(tau=tau, scale=i, score=score)
    return None


def sl_detect(data: SeriesMatrix, cfg: DetectionConfig) -> ChangePointReport:
    """Recursive segmentation: children (b, tau) and (tau + 1, e) restart at the firing scale."""
    _check_data(data, cfg)
    diagnostics = ScanDiagnostics()
    found: List[Detection] = []

    # (i0, b, e) work stack; the left child is pushed last so it is scanned first
    pending: List[Tuple[int, int, int]] = [(cfg.i0_default, 1, data.T)]
    while pending:
        i0, b, e = pending.pop()
        hit = sl_estimate(data, cfg, i0, b, e, diagnostics)
        if hit is None:
            continue
        found.append(hit)
        pending.append((hit.scale, hit.tau + 1, e))
        pending.append((hit.scale, b, hit.tau))
    detections = sorted(found, key=lambda d: d.tau)

    diagnostics.first_pass_triples = first_pass_triple_count(cfg.schedule, data.T, cfg.i0_default)
    i_T = max_scale(cfg.schedule, data.T)
    info = diagnostics.as_dict()
    info["i_T"] = i_T
    if i_T >= 1:
        complexity = schedule_log_complexity(cfg.schedule, i_T)
        info["log_window_complexity"] = complexity
        info["threshold_margin"] = cfg.threshold - complexity
    config = cfg.describe()
    config["T"] = data.T
    config["recursion"] = "left child (b, tau), right child (tau + 1, e)"
    if diagnostics.guard_floor_count:
        logger.warning(f"{diagnostics.guard_floor_count} sparsity term(s) hit the guard floor")
    logger.info(f"Detected {len(detections)} change-point(s) with threshold {cfg.threshold:g}")
    return ChangePointReport(detections=detections, config=config, diagnostics=info)


def first_pass_triple_count(schedule: WindowSchedule, T: int, i0: int = 1) -> int:
    i_T = max_scale(schedule, T)
    return sum((T - 1) // schedule.spacing(i) for i in range(i0, i_T + 1))


def first_pass_max(data: SeriesMatrix, cfg: DetectionConfig) -> float:
    """Largest penalised score over every scale and triple of the scan of 1..T."""
    _check_data(data, cfg)
    diagnostics = ScanDiagnostics()
    best = NO_SCORE
    for i in range(1, max_scale(cfg.schedule, data.T) + 1):
        score, _ = scan_scale(data, cfg, i, 1, data.T, diagnostics)
        best = max(best, score)
    return best


def threshold_for_count(data: SeriesMatrix, cfg: DetectionConfig, target: int,
                        iterations: int = 40) -> Tuple[float, ChangePointReport]:
    """Bisect the threshold until detection returns `target` change-points.

    Counts are taken to be nonincreasing in the threshold. When no threshold
    gives the exact count the largest threshold reaching at least `target` wins.
    """
    if target < 0:
        raise ValueError("target count must be nonnegative")
    top = first_pass_max(data, cfg)
    if not math.isfinite(top):
        raise ValueError("series too short to scan")
    hi = top + 1e-9
    if target == 0:
        return hi, sl_detect(data, replace(cfg, threshold=hi))

    step = 1.0
    lo = top - step
    lo_report = sl_detect(data, replace(cfg, threshold=lo))
    while len(lo_report.detections) < target and step < 1e6:
        step *= 2
        lo = top - step
        lo_report = sl_detect(data, replace(cfg, threshold=lo))
    if len(lo_report.detections) < target:
        logger.warning(f"no threshold above {lo:g} reaches {target} change-points")
        return lo, lo_report

    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        report = sl_detect(data, replace(cfg, threshold=mid))
        if len(report.detections) >= target:
            lo, lo_report = mid, report
        else:
            hi = mid
    if len(lo_report.detections) != target:
        logger.warning(f"closest achievable count is {len(lo_report.detections)} (target {target})")
    return lo, lo_report


def merge_close(detections: List[Detection], gap: int) -> List[Detection]:
    """Collapse runs of detections at most `gap` apart into their highest-scoring member."""
    if gap < 0:
        raise ValueError("gap must be nonnegative")
    merged: List[Detection] = []
    cluster: List[Detection] = []
    for det in sorted(detections, key=lambda d: d.tau):
        if cluster and det.tau - cluster[-1].tau > gap:
            merged.append(max(cluster, key=lambda d: d.score))
            cluster = []
        cluster.append(det)
    if cluster:
        merged.append(max(cluster, key=lambda d: d.score))
    return merged
