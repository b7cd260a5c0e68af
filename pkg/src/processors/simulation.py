#!/usr/bin/env python3
"""
Synthetic scenarios and Monte Carlo studies.

Noise is AR(1) with X_0 = 0; the deterministic mean profile is added to
the generated path. Every replicate draws from its own seed substream
(see src.utils.parallel_utils.replicate_rng). Null calibration uses a separate
stream from the studies, so a threshold is never fitted on the noise it is
later scored against.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Set, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, root_validator, validator
from scipy.signal import lfilter

from src.configs.config import (DEFAULT_ALPHA, DEFAULT_CALIBRATION_REPS, DEFAULT_GROWTH,
                                DEFAULT_LAMBDA1)
from src.processors.covariance import CovarianceKernel, kernel_from_ar1
from src.processors.detector import DetectionConfig, first_pass_max, sl_detect
from src.processors.evaluation import (adjusted_rand_index, count_histogram, hit_rate,
                                       nearest_estimate, segmentation_labels)
from src.processors.scoring import SeriesMatrix, SparsityParams, default_lambda2
from src.processors.windows import build_schedule
from src.utils.file_utils import DataError, read_key_values
from src.utils.parallel_utils import CALIBRATION_STREAM, run_replicates

logger = logging.getLogger(__name__)

SINGLE_CHANGE_SIGNAL = 1.2
MULTI_CHANGE_BLOCK = 40
SCENARIO_KINDS = ("null", "single", "multi")


class Ar1Params(BaseModel):
    c: float = 0.0
    phi: float
    sigma_eps: float = 1.0

    class Config:
        allow_mutation = False

    @validator('phi')
    def _phi_range(cls, v):
        if not (abs(v) < 1 or v == 1):
            raise ValueError(f"need |phi| < 1 or phi = 1, got {v}")
        return v

    @validator('sigma_eps')
    def _sigma_positive(cls, v):
        if v <= 0:
            raise ValueError(f"sigma_eps must be > 0, got {v}")
        return v

    @property
    def is_random_walk(self) -> bool:
        return self.phi == 1

    def kernel(self) -> CovarianceKernel:
        return kernel_from_ar1(self.phi, self.sigma_eps)


class ScenarioSpec(BaseModel):
    """One simulation design: null (no change), single change or three changes."""
    kind: str = "single"
    n: int = 200
    t: int = 2000
    v: int = 3
    tau: Optional[List[int]] = None
    phi: float = 1.0
    sigma_eps: float = 1.0
    c: float = 0.0
    r: float = 1.0
    k: int = 0
    seed: int = 0
    reps: int = 100
    alpha: float = DEFAULT_ALPHA
    growth: float = DEFAULT_GROWTH
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: Optional[float] = None

    class Config:
        allow_mutation = False

    @validator('kind')
    def _known_kind(cls, v):
        if v not in SCENARIO_KINDS:
            raise ValueError(f"kind must be one of {SCENARIO_KINDS}, got {v!r}")
        return v

    @validator('n', 't', 'v', 'reps')
    def _positive_count(cls, v):
        if v < 1:
            raise ValueError(f"counts must be positive, got {v}")
        return v

    @validator('alpha')
    def _alpha_range(cls, v):
        if not 0 < v < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {v}")
        return v

    @root_validator(skip_on_failure=True)
    def _consistent(cls, values):
        kind, n, t = values['kind'], values['n'], values['t']
        tau = values.get('tau')
        if tau is None:
            if kind == "single":
                tau = [int(0.4 * t)]
            elif kind == "multi":
                tau = [t // 4, t // 2, 3 * t // 4]
            else:
                tau = []
        if any(not 0 < x < t for x in tau) or any(b <= a for a, b in zip(tau, tau[1:])):
            raise ValueError(f"tau must be strictly increasing inside (0, {t}), got {tau}")
        if kind == "null" and tau:
            raise ValueError("a null scenario has no change-points")
        if kind == "single":
            if len(tau) != 1:
                raise ValueError(f"single-change scenario takes one tau, got {tau}")
            if values['v'] > n:
                raise ValueError(f"V={values['v']} exceeds N={n}")
        if kind == "multi" and values['k'] * (len(tau) - 1) + MULTI_CHANGE_BLOCK > n:
            raise ValueError(f"changed blocks with k={values['k']} exceed N={n}")
        Ar1Params(c=values['c'], phi=values['phi'], sigma_eps=values['sigma_eps'])
        values['tau'] = tau
        return values

    @property
    def ar1(self) -> Ar1Params:
        return Ar1Params(c=self.c, phi=self.phi, sigma_eps=self.sigma_eps)

    def mean_matrix(self) -> Optional[np.ndarray]:
        if self.kind == "single":
            return single_change_scenario(self.n, self.t, self.v, self.tau[0])
        if self.kind == "multi":
            return multi_change_scenario(self.n, self.t, tuple(self.tau), self.r, self.k)
        return None

    def sparsity_params(self) -> SparsityParams:
        lambda2 = self.lambda2 if self.lambda2 is not None else default_lambda2(self.t)
        return SparsityParams(lambda1=self.lambda1, lambda2=lambda2, N=self.n)

    def detection_config(self, threshold: float) -> DetectionConfig:
        return DetectionConfig(threshold=threshold, params=self.sparsity_params(),
                               kernel=self.ar1.kernel(),
                               schedule=build_schedule(self.t, self.growth))

    def null(self) -> "ScenarioSpec":
        return self.copy(update={"kind": "null", "tau": []})


def _as_rng(seed: Union[int, np.random.Generator]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_ar1(params: Ar1Params, N: int, T: int, seed: Union[int, np.random.Generator],
            mean_matrix: Optional[np.ndarray] = None, burn_in: bool = False) -> SeriesMatrix:
    """X_t = c + phi X_{t-1} + eps_t from X_0 = 0, plus the mean profile."""
    if N < 1 or T < 2:
        raise ValueError(f"need N >= 1 and T >= 2, got N={N}, T={T}")
    if mean_matrix is not None and np.shape(mean_matrix) != (N, T):
        raise ValueError(f"mean matrix has shape {np.shape(mean_matrix)}, expected {(N, T)}")
    burn = 0
    if burn_in and abs(params.phi) < 1:
        burn = math.ceil(10.0 / (1.0 - abs(params.phi)))
    rng = _as_rng(seed)
    eps = rng.normal(0.0, params.sigma_eps, size=(N, T + burn))
    path = lfilter([1.0], [1.0, -params.phi], params.c + eps, axis=1)[:, burn:]
    if mean_matrix is not None:
        path = path + mean_matrix
    return SeriesMatrix(path)


def single_change_scenario(N: int, T: int, V: int, tau1: int) -> np.ndarray:
    """Sequences 1..V jump by 1.2 / sqrt(n H_V) after tau1; total squared change 1.44."""
    if not 1 <= V <= N:
        raise ValueError(f"need 1 <= V <= N, got V={V}, N={N}")
    if not 1 <= tau1 < T:
        raise ValueError(f"need 1 <= tau1 < T, got tau1={tau1}, T={T}")
    harmonic = sum(1.0 / m for m in range(1, V + 1))
    n = np.arange(1, V + 1)
    mean = np.zeros((N, T))
    mean[:V, tau1:] = (SINGLE_CHANGE_SIGNAL / np.sqrt(n * harmonic))[:, None]
    return mean


def multi_change_scenario(N: int = 200, T: int = 2000, tau: Sequence[int] = (500, 1000, 1500),
                          r: float = 1.0, k: int = 0) -> np.ndarray:
    """Change j raises sequences k(j-1)+1 .. k(j-1)+40 by r / sqrt(n H_40) from tau_j + 1 on."""
    if k < 0:
        raise ValueError(f"overlap offset must be nonnegative, got {k}")
    if k * (len(tau) - 1) + MULTI_CHANGE_BLOCK > N:
        raise ValueError(f"changed blocks with k={k} exceed N={N}")
    if any(not 0 < x < T for x in tau) or any(b <= a for a, b in zip(tau, tau[1:])):
        raise ValueError(f"tau must be strictly increasing inside (0, {T}), got {tau}")
    harmonic = sum(1.0 / m for m in range(1, MULTI_CHANGE_BLOCK + 1))
    step = r / np.sqrt(np.arange(1, MULTI_CHANGE_BLOCK + 1) * harmonic)
    mean = np.zeros((N, T))
    for j, tj in enumerate(tau):
        rows = slice(k * j, k * j + MULTI_CHANGE_BLOCK)
        mean[rows, tj:] += step[:, None]
    return mean


def changed_sequences(mean_matrix: np.ndarray, tau: int, delta: float = 1e-12) -> Set[int]:
    """0-based rows whose mean moves by at least delta between tau and tau + 1."""
    jump = np.abs(mean_matrix[:, tau] - mean_matrix[:, tau - 1])
    return set(int(n) for n in np.flatnonzero(jump >= delta))


def changed_sequence_count(mean_matrix: np.ndarray, tau: int, delta: float = 1e-12) -> int:
    return len(changed_sequences(mean_matrix, tau, delta))


def _null_max(rng: np.random.Generator, spec: ScenarioSpec, cfg: DetectionConfig) -> float:
    data = gen_ar1(spec.ar1, spec.n, spec.t, rng)
    return first_pass_max(data, cfg)


def null_maxima(spec: ScenarioSpec, reps: int, seed: int, n_jobs: Optional[int] = None,
                progress: bool = True) -> np.ndarray:
    """First-pass score maxima of `reps` no-change datasets."""
    null = spec.null()
    cfg = null.detection_config(threshold=0.0)
    maxima = run_replicates(_null_max, reps, seed, n_jobs=n_jobs, desc="Null replicates",
                            progress=progress, stream=CALIBRATION_STREAM, spec=null, cfg=cfg)
    return np.asarray(maxima, dtype=float)


def calibrate_threshold(spec: ScenarioSpec, alpha: Optional[float] = None,
                        reps: int = DEFAULT_CALIBRATION_REPS, seed: Optional[int] = None,
                        n_jobs: Optional[int] = None, progress: bool = True) -> float:
    """(1 - alpha) quantile, midpoint rule, of the null first-pass maxima."""
    alpha = spec.alpha if alpha is None else alpha
    seed = spec.seed if seed is None else seed
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if reps < 20:
        raise ValueError(f"calibration needs at least 20 replicates, got {reps}")
    maxima = null_maxima(spec, reps, seed, n_jobs=n_jobs, progress=progress)
    return threshold_from_maxima(maxima, alpha)


def threshold_from_maxima(maxima: np.ndarray, alpha: float) -> float:
    return float(np.quantile(maxima, 1.0 - alpha, method="midpoint"))


def _single_estimate(rng: np.random.Generator, spec: ScenarioSpec, cfg: DetectionConfig) -> Optional[int]:
    data = gen_ar1(spec.ar1, spec.n, spec.t, rng, spec.mean_matrix())
    report = sl_detect(data, cfg)
    return nearest_estimate(report.changepoints, spec.tau[0])


def run_accuracy_study(grid: Sequence[ScenarioSpec], reps: Optional[int] = None,
                       ks: Sequence[int] = (3, 10), threshold: Optional[float] = None,
                       calibration_reps: int = DEFAULT_CALIBRATION_REPS,
                       n_jobs: Optional[int] = None, progress: bool = True) -> pd.DataFrame:
    """Hit rates within k of tau_1 per (T, N, V) cell.

    Without a fixed threshold each (T, N) pair is calibrated once on its own
    null replicates; the null does not depend on V.
    """
    thresholds: Dict[tuple, float] = {}
    rows = []
    for spec in grid:
        if spec.kind != "single":
            raise ValueError("accuracy studies use single-change scenarios")
        cell_reps = spec.reps if reps is None else reps
        key = (spec.t, spec.n, spec.phi, spec.sigma_eps, spec.growth, spec.lambda1, spec.lambda2)
        if threshold is not None:
            c = threshold
        elif key in thresholds:
            c = thresholds[key]
        else:
            c = calibrate_threshold(spec, reps=calibration_reps, n_jobs=n_jobs, progress=progress)
            thresholds[key] = c
            logger.info(f"T={spec.t}, N={spec.n}: calibrated threshold {c:.4f}")
        estimates = run_replicates(_single_estimate, cell_reps, spec.seed, n_jobs=n_jobs,
                                   desc=f"T={spec.t} N={spec.n} V={spec.v}", progress=progress,
                                   spec=spec, cfg=spec.detection_config(c))
        row = {"T": spec.t, "N": spec.n, "V": spec.v, "threshold": c, "reps": cell_reps}
        for k in ks:
            row[f"k={k}"] = hit_rate(estimates, spec.tau[0], k)
        rows.append(row)
    return pd.DataFrame(rows)


def _segmentation_replicate(rng: np.random.Generator, spec: ScenarioSpec, cfg: DetectionConfig):
    data = gen_ar1(spec.ar1, spec.n, spec.t, rng, spec.mean_matrix())
    found = sl_detect(data, cfg).changepoints
    ari = adjusted_rand_index(segmentation_labels(spec.tau, spec.t), segmentation_labels(found, spec.t))
    return len(found), ari


def run_segmentation_study(spec: ScenarioSpec, threshold: float, reps: Optional[int] = None,
                           n_jobs: Optional[int] = None, progress: bool = True) -> Dict[str, float]:
    """Histogram of estimated change-point counts and mean ARI over replicates."""
    if spec.kind != "multi":
        raise ValueError("segmentation studies use the three-change scenario")
    reps = spec.reps if reps is None else reps
    results = run_replicates(_segmentation_replicate, reps, spec.seed, n_jobs=n_jobs,
                             desc=f"r={spec.r} k={spec.k}", progress=progress,
                             spec=spec, cfg=spec.detection_config(threshold))
    counts = [count for count, _ in results]
    aris = [ari for _, ari in results]
    row = {"r": spec.r, "k": spec.k, "threshold": threshold}
    row.update(count_histogram(counts, aris))
    return row


def scenario_from_file(path) -> ScenarioSpec:
    """Build a ScenarioSpec from a key=value file; tau is a comma-separated list."""
    raw = read_key_values(path)
    unknown = set(raw) - set(ScenarioSpec.__fields__)
    if unknown:
        raise DataError(f"{path}: unknown scenario keys {sorted(unknown)}")
    values: Dict[str, object] = dict(raw)
    if 'tau' in values:
        try:
            values['tau'] = [int(x) for x in str(values['tau']).replace(',', ' ').split()]
        except ValueError as e:
            raise DataError(f"{path}: tau must be integers ({e})") from e
    try:
        return ScenarioSpec(**values)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


def dataset_frame(data: SeriesMatrix) -> pd.DataFrame:
    """Rows are time points, columns are sequences."""
    return pd.DataFrame(data.values.T, columns=data.names)
