#!/usr/bin/env python3
"""
Sparsity likelihood scoring of window triples.

For a triple (s, t, u) every sequence contributes a two-sided p-value for a
mean difference between s+1..t and t+1..u. The p-values are combined by the
sparsity likelihood transform and penalised for the window geometry.
All p-values travel as log p so that very strong signals stay finite.
"""

import logging
import math
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator

from src.configs.config import SCAN_BLOCK_ELEMENTS, SL_TERM_FLOOR
from src.processors.covariance import CovarianceKernel
from src.utils.stats_utils import log_two_sided_pvalue

logger = logging.getLogger(__name__)

LOG_FLOOR = math.log(SL_TERM_FLOOR)


class SeriesMatrix:
    """N sequences by T time points, with per-sequence prefix sums."""

    def __init__(self, values: np.ndarray, names=None):
        values = np.array(values, dtype=float, ndmin=2)
        if values.ndim != 2:
            raise ValueError(f"series matrix must be two-dimensional, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 2:
            raise ValueError(f"need at least one sequence of length 2, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("series matrix contains non-finite values")
        self.values = values
        self.names = list(names) if names is not None else [f"s{n + 1}" for n in range(values.shape[0])]
        self.prefix = np.zeros((values.shape[0], values.shape[1] + 1))
        np.cumsum(values, axis=1, out=self.prefix[:, 1:])

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


class SparsityParams(BaseModel):
    lambda1: float = 1.0
    lambda2: float
    N: int

    class Config:
        allow_mutation = False

    @validator('lambda1')
    def _lambda1_nonnegative(cls, v):
        if v < 0:
            raise ValueError("lambda1 must be >= 0")
        return v

    @validator('lambda2')
    def _lambda2_positive(cls, v):
        if v <= 0:
            raise ValueError("lambda2 must be > 0")
        return v

    @validator('N')
    def _enough_sequences(cls, v, values):
        # log N appears in a denominator
        if v < 2:
            raise ValueError("the sparsity likelihood needs N >= 2 sequences")
        lambda2 = values.get('lambda2')
        if lambda2 is not None and lambda2 > math.sqrt(v):
            logger.warning(f"lambda2={lambda2:.3g} exceeds sqrt(N)={math.sqrt(v):.3g}")
        return v

    @property
    def weight1(self) -> float:
        return self.lambda1 * math.log(self.N) / self.N

    @property
    def weight2(self) -> float:
        return self.lambda2 / math.sqrt(self.N * math.log(self.N))


class WindowTriple(NamedTuple):
    s: int
    t: int
    u: int


def _check_window(w: WindowTriple, T: Optional[int] = None):
    s, t, u = w
    if not 0 <= s < t < u:
        raise ValueError(f"invalid window (s={s}, t={t}, u={u}); need 0 <= s < t < u")
    if T is not None and u > T:
        raise ValueError(f"window end {u} beyond series length {T}")


def window_mean(matrix: SeriesMatrix, n: int, a: int, b: int) -> float:
    """Mean of observations a+1..b of sequence row n."""
    if not 0 <= a < b <= matrix.T:
        raise ValueError(f"empty or out-of-range window ({a}, {b}] for length {matrix.T}")
    return float((matrix.prefix[n, b] - matrix.prefix[n, a]) / (b - a))


def z_statistic(matrix: SeriesMatrix, n: int, kernel: CovarianceKernel, w: WindowTriple) -> float:
    w = WindowTriple(*w)
    _check_window(w, matrix.T)
    var = kernel.variance(*w)
    if not var > 0:
        raise ValueError(f"nonpositive variance {var:g} for window {tuple(w)}")
    diff = window_mean(matrix, n, w.t, w.u) - window_mean(matrix, n, w.s, w.t)
    return diff / math.sqrt(var)


def log_p_value(z: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """log of the two-sided normal p-value 2 * Phi(-|z|)."""
    return log_two_sided_pvalue(z)


def _resolve_log_p(p: Optional[float], log_p: Optional[float]) -> float:
    if log_p is None:
        if p is None or not 0 < p <= 1:
            raise ValueError(f"p-value must lie in (0, 1], got {p}")
        return math.log(p)
    if log_p > 0 or math.isnan(log_p):
        raise ValueError(f"log p-value must be <= 0, got {log_p}")
    return log_p


def f1(p: Optional[float] = None, log_p: Optional[float] = None) -> float:
    lp = _resolve_log_p(p, log_p)
    return math.exp(-lp - 2.0 * math.log(2.0 - lp)) - 0.5


def f2(p: Optional[float] = None, log_p: Optional[float] = None) -> float:
    lp = _resolve_log_p(p, log_p)
    return math.exp(-0.5 * lp) - 2.0


def sl_terms(log_p: np.ndarray, params: SparsityParams) -> Tuple[np.ndarray, int]:
    """Elementwise l(p) from log p, with the count of guard-floored entries.

    l = log(C + e^A + e^B) where C = 1 - w1/2 - 2 w2 collects the constants,
    A = log w1 - log p - 2 log(2 - log p) and B = log w2 - log(p)/2.
    The sum is factored by max(A, B, 0) so tiny p never overflows.
    """
    lp = np.asarray(log_p, dtype=float)
    w1, w2 = params.weight1, params.weight2
    const = 1.0 - 0.5 * w1 - 2.0 * w2

    b = math.log(w2) - 0.5 * lp
    if w1 > 0:
        a = math.log(w1) - lp - 2.0 * np.log(2.0 - lp)
    else:
        a = np.full_like(lp, -np.inf)
    m = np.maximum(np.maximum(a, b), 0.0)

    with np.errstate(over='ignore', under='ignore'):
        inner = const * np.exp(-m) + np.exp(a - m) + np.exp(b - m)
        shifted = (const - 1.0) + np.exp(a) + np.exp(b)

    small = m == 0.0
    out = np.empty_like(lp)
    floored = inner <= 0
    ok_small = small & ~floored
    ok_large = ~small & ~floored
    out[ok_small] = np.log1p(shifted[ok_small])
    out[ok_large] = m[ok_large] + np.log(inner[ok_large])
    out[floored] = LOG_FLOOR
    return out, int(np.count_nonzero(floored))


def sl_term(log_p: float, params: SparsityParams) -> float:
    if log_p > 0:
        raise ValueError(f"log p-value must be <= 0, got {log_p}")
    values, floored = sl_terms(np.array([log_p]), params)
    if floored:
        logger.debug(f"sparsity likelihood argument not positive at log p={log_p:.4g}; floored")
    return float(values[0])


def sl_score(log_p: np.ndarray, params: SparsityParams) -> float:
    log_p = np.asarray(log_p, dtype=float)
    if log_p.shape != (params.N,):
        raise ValueError(f"expected {params.N} log p-values, got shape {log_p.shape}")
    values, _ = sl_terms(log_p, params)
    return float(values.sum())


def geometry_penalty(T: int, s, t, u):
    return np.log(T / 4.0 * (1.0 / (np.asarray(t) - s) + 1.0 / (np.asarray(u) - t)))


def penalized_score(score: float, T: int, w: WindowTriple) -> float:
    w = WindowTriple(*w)
    _check_window(w, T)
    return float(score - geometry_penalty(T, w.s, w.t, w.u))


def default_lambda2(T: float) -> float:
    """lambda2 = sqrt(log T / log log T), natural logarithms."""
    if T <= math.e:
        raise ValueError(f"default lambda2 needs log log T > 0, got T={T}")
    return math.sqrt(math.log(T) / math.log(math.log(T)))


def penalized_scores(matrix: SeriesMatrix, kernel: CovarianceKernel, params: SparsityParams,
                     T: int, s: np.ndarray, t: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, int]:
    """Penalised sparsity likelihood scores for arrays of global triples."""
    s = np.asarray(s, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    u = np.asarray(u, dtype=np.int64)
    if s.size == 0:
        return np.empty(0), 0

    var = kernel.variance_array(s, t, u)
    if np.any(~(var > 0)):
        bad = int(np.argmax(~(var > 0)))
        raise ValueError(f"nonpositive variance {var[bad]:g} for window ({s[bad]}, {t[bad]}, {u[bad]})")
    scale = 1.0 / np.sqrt(var)
    penalty = geometry_penalty(T, s, t, u)

    prefix = matrix.prefix
    block = max(1, SCAN_BLOCK_ELEMENTS // matrix.N)
    scores = np.empty(s.size)
    floored = 0
    for lo in range(0, s.size, block):
        sl = slice(lo, lo + block)
        ps, pt, pu = prefix[:, s[sl]], prefix[:, t[sl]], prefix[:, u[sl]]
        left = (pt - ps) / (t[sl] - s[sl])
        right = (pu - pt) / (u[sl] - t[sl])
        z = (right - left) * scale[sl]
        terms, hits = sl_terms(log_two_sided_pvalue(z), params)
        scores[sl] = terms.sum(axis=0) - penalty[sl]
        floored += hits
    return scores, floored
