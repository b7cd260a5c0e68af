#!/usr/bin/env python3
"""
Loading and preprocessing of real multivariate series.

The pipeline mirrors the usual treatment of daily closing prices: log
returns, removal of strongly skewed sequences, per-sequence AR(1) fits,
and rescaling to unit innovation variance under one pooled kernel.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import skew

from src.configs.config import DEFAULT_SKEW_THRESHOLD, PHI_IQR_WARNING
from src.processors.scoring import SeriesMatrix
from src.processors.simulation import Ar1Params
from src.utils.file_utils import DataError, scan_csv_rows

logger = logging.getLogger(__name__)

LAYOUTS = ("rows=time", "rows=series")


@dataclass
class Dataset:
    names: List[str]
    values: np.ndarray
    provenance: List[str] = field(default_factory=lambda: ["raw"])
    dropped: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError(f"dataset must be two-dimensional, got shape {self.values.shape}")
        if len(self.names) != self.values.shape[0]:
            raise DataError(f"{len(self.names)} names for {self.values.shape[0]} sequences")
        if self.values.shape[1] < 2:
            raise DataError(f"need at least 2 time points, got {self.values.shape[1]}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("dataset contains missing or non-finite values")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def to_matrix(self) -> SeriesMatrix:
        return SeriesMatrix(self.values, names=self.names)


@dataclass(frozen=True)
class Ar1Fit:
    c_hat: float
    phi_hat: float
    sigma_eps_hat: float


def read_csv(path: Union[str, Path], layout: str = "rows=time", header: bool = True,
             drop_missing: bool = False) -> Dataset:
    """Read a numeric CSV.

    rows=time: one column per sequence, header names the sequences.
    rows=series: one row per sequence, the header row (if any) is skipped and
    names are generated.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    path = Path(path)
    scan_csv_rows(path)
    try:
        frame = pd.read_csv(path, header=0 if header else None, skip_blank_lines=True,
                            skipinitialspace=True, float_precision="round_trip")
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path.name}: file is empty") from e
    except pd.errors.ParserError as e:
        raise DataError(f"{path.name}: {e}") from e

    # data lines start after the header line
    first_line = 2 if header else 1
    missing = frame.isna()
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & ~missing
    if bad.values.any():
        row, col = np.argwhere(bad.values)[0]
        raise DataError(f"{path.name}: line {row + first_line}: non-numeric value {frame.iat[row, col]!r}")

    if missing.values.any():
        gap_rows = np.flatnonzero(missing.values.any(axis=1))
        if not drop_missing:
            raise DataError(f"{path.name}: line {gap_rows[0] + first_line} has missing values "
                            f"(use --drop-missing to drop such rows)")
        logger.warning(f"{path.name}: dropping {len(gap_rows)} row(s) with missing values")
        numeric = numeric.drop(index=numeric.index[gap_rows])

    if numeric.empty:
        raise DataError(f"{path.name}: no data rows")
    if layout == "rows=time":
        values = numeric.to_numpy(dtype=float).T
        names = [str(c) for c in numeric.columns] if header else [f"s{n + 1}" for n in range(values.shape[0])]
    else:
        values = numeric.to_numpy(dtype=float)
        names = [f"s{n + 1}" for n in range(values.shape[0])]
    logger.info(f"Read {path.name}: N={values.shape[0]}, T={values.shape[1]}")
    return Dataset(names=names, values=values, provenance=["raw"])


def log_difference(series: np.ndarray) -> np.ndarray:
    """y_t = log x_{t+1} - log x_t along the last axis."""
    x = np.asarray(series, dtype=float)
    if np.any(x <= 0):
        raise DataError("log differencing needs strictly positive values")
    return np.diff(np.log(x), axis=-1)


def log_difference_dataset(data: Dataset) -> Dataset:
    return replace(data, values=log_difference(data.values), provenance=data.provenance + ["log-diff"])


def skewness_filter(data: Dataset, threshold: float = DEFAULT_SKEW_THRESHOLD) -> Dataset:
    """Drop sequences with |sample skewness| above threshold or zero variance."""
    if threshold <= 0:
        raise ValueError(f"skewness threshold must be positive, got {threshold}")
    keep = []
    dropped = dict(data.dropped)
    for n, name in enumerate(data.names):
        row = data.values[n]
        if np.ptp(row) == 0:
            dropped[name] = "zero variance"
            continue
        g1 = float(skew(row, bias=True))
        if abs(g1) > threshold:
            dropped[name] = f"skewness {g1:.3f}"
            continue
        keep.append(n)
    for name, reason in dropped.items():
        if name not in data.dropped:
            logger.info(f"Dropped sequence {name}: {reason}")
    if not keep:
        raise DataError("every sequence was removed by the skewness filter")
    logger.info(f"Skewness filter kept {len(keep)} of {data.N} sequences")
    return Dataset(names=[data.names[n] for n in keep], values=data.values[keep],
                   provenance=data.provenance + [f"skew<={threshold:g}"], dropped=dropped)


def estimate_ar1(series: Sequence[float]) -> Ar1Fit:
    """Least squares of X_t on (1, X_{t-1}); sigma is the root mean squared residual."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DataError(f"AR(1) fit needs a series of length >= 3, got shape {x.shape}")
    prev, curr = x[:-1], x[1:]
    if np.ptp(prev) == 0:
        raise DataError("AR(1) fit is singular: predecessor values are constant")
    design = np.column_stack([np.ones_like(prev), prev])
    coef, _, _, _ = np.linalg.lstsq(design, curr, rcond=None)
    resid = curr - design @ coef
    sigma = float(np.sqrt(np.mean(resid ** 2)))
    return Ar1Fit(c_hat=float(coef[0]), phi_hat=float(coef[1]), sigma_eps_hat=sigma)


def standardize(data: Dataset, fits: Sequence[Ar1Fit]) -> Tuple[Dataset, Ar1Params]:
    """Rescale to unit innovation variance and pool the AR(1) fits."""
    if len(fits) != data.N:
        raise ValueError(f"{len(fits)} fits for {data.N} sequences")
    sigma = np.array([f.sigma_eps_hat for f in fits])
    zero = np.flatnonzero(sigma <= 0)
    if zero.size:
        raise DataError(f"sequence {data.names[zero[0]]} has zero innovation variance")
    phis = np.array([f.phi_hat for f in fits])
    q1, q3 = np.percentile(phis, [25, 75])
    if q3 - q1 > PHI_IQR_WARNING:
        logger.warning(f"AR(1) coefficients are heterogeneous (IQR {q3 - q1:.3f}); pooling by the mean")
    phi = float(np.mean(phis))
    if phi <= -1:
        raise DataError(f"pooled phi={phi:.4f} is not an admissible AR(1) coefficient")
    if phi > 1:
        logger.warning(f"pooled phi={phi:.4f} outside the stationary range; using a random walk")
        phi = 1.0
    c = float(np.mean(np.array([f.c_hat for f in fits]) / sigma))
    scaled = replace(data, values=data.values / sigma[:, None],
                     provenance=data.provenance + ["standardized"])
    return scaled, Ar1Params(c=c, phi=phi, sigma_eps=1.0)


def correlation_diagnostic(data: Dataset) -> float:
    """Largest absolute off-diagonal sample correlation between sequences."""
    if data.N < 2:
        return 0.0
    varying = np.ptp(data.values, axis=1) > 0
    corr = np.corrcoef(data.values[varying])
    if corr.ndim < 2:
        return 0.0
    np.fill_diagonal(corr, 0.0)
    return float(np.max(np.abs(corr)))


def preprocess(data: Dataset, log_diff: bool = False, skew_threshold: Optional[float] = None,
               estimate: bool = False) -> Tuple[Dataset, Optional[Ar1Params]]:
    """Log returns, skewness filter and AR(1) standardisation, each optional."""
    if log_diff:
        data = log_difference_dataset(data)
    if skew_threshold is not None:
        data = skewness_filter(data, skew_threshold)
    pooled = None
    if estimate:
        fits = [estimate_ar1(row) for row in data.values]
        data, pooled = standardize(data, fits)
        logger.info(f"Pooled AR(1): phi={pooled.phi:.4f}, c={pooled.c:.4g}")
    max_corr = correlation_diagnostic(data)
    logger.info(f"Max absolute cross-sequence correlation: {max_corr:.3f}")
    return data, pooled
