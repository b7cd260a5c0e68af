#!/usr/bin/env python3
"""
Temporal covariance shared by every sequence.

A kernel answers two questions for the scan: the covariance of two time
points, and the variance of the difference between two adjacent window means.
The built-in kernels use closed forms, so a variance costs O(1) whatever the
window length. AR(1) kernels with phi near 1 sum over the window lengths
instead, once per distinct geometry. Custom tables go through two-dimensional
prefix sums.
"""

import logging
import math
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, root_validator, validator

from src.configs.config import AR1_NEAR_UNIT_PHI, ORACLE_MAX_WINDOW
from src.utils.file_utils import DataError

logger = logging.getLogger(__name__)

IndexLike = Union[int, np.ndarray]


class KernelKind(str, Enum):
    INDEPENDENCE = "independence"
    STATIONARY_AR1 = "stationary_ar1"
    RANDOM_WALK = "random_walk"
    CUSTOM = "custom"


class CovarianceKernel:
    """Known covariance sigma_ij of one sequence, identical across sequences."""

    def __init__(self, kind: KernelKind, phi: float = 0.0, sigma_eps: float = 1.0,
                 table: Optional[np.ndarray] = None):
        self.kind = KernelKind(kind)
        self.phi = float(phi)
        self.sigma_eps = float(sigma_eps)
        self._cache: Dict[Tuple[int, int], float] = {}
        self._table = None
        self._prefix = None

        if self.kind == KernelKind.STATIONARY_AR1 and not abs(self.phi) < 1:
            raise ValueError(f"stationary AR(1) needs |phi| < 1, got {self.phi}")
        if self.kind in (KernelKind.STATIONARY_AR1, KernelKind.RANDOM_WALK) and self.sigma_eps <= 0:
            raise ValueError(f"sigma_eps must be positive, got {self.sigma_eps}")
        if self.kind == KernelKind.CUSTOM:
            self._set_table(table)

    @classmethod
    def independence(cls) -> "CovarianceKernel":
        return cls(KernelKind.INDEPENDENCE)

    @classmethod
    def stationary_ar1(cls, phi: float, sigma_eps: float = 1.0) -> "CovarianceKernel":
        return cls(KernelKind.STATIONARY_AR1, phi=phi, sigma_eps=sigma_eps)

    @classmethod
    def random_walk(cls, sigma_eps: float = 1.0) -> "CovarianceKernel":
        return cls(KernelKind.RANDOM_WALK, sigma_eps=sigma_eps)

    @classmethod
    def custom(cls, table: np.ndarray) -> "CovarianceKernel":
        return cls(KernelKind.CUSTOM, table=table)

    def _set_table(self, table: Optional[np.ndarray]):
        if table is None:
            raise ValueError("custom kernel needs a covariance table")
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise ValueError(f"covariance table must be square, got shape {table.shape}")
        if not np.allclose(table, table.T, rtol=1e-12, atol=1e-12):
            raise ValueError("covariance table is not symmetric")
        eigenvalues = np.linalg.eigvalsh(table)
        if eigenvalues[0] < -1e-8 * max(1.0, abs(eigenvalues[-1])):
            raise ValueError(f"covariance table is not positive semidefinite (min eigenvalue {eigenvalues[0]:.3g})")
        self._table = table
        # Extended precision keeps block sums exact enough for variance differences
        prefix = np.zeros((table.shape[0] + 1, table.shape[1] + 1), dtype=np.longdouble)
        prefix[1:, 1:] = np.cumsum(np.cumsum(table.astype(np.longdouble), axis=0), axis=1)
        self._prefix = prefix

    @property
    def shift_invariant(self) -> bool:
        return self.kind != KernelKind.CUSTOM

    @property
    def length(self) -> Optional[int]:
        """Number of time points a custom table covers; None for built-ins."""
        return None if self._table is None else self._table.shape[0]

    @property
    def gamma0(self) -> float:
        """Marginal variance of the stationary AR(1) kernel."""
        return self.sigma_eps ** 2 / ((1.0 - self.phi) * (1.0 + self.phi))

    def describe(self) -> dict:
        info = {"kind": self.kind.value}
        if self.kind == KernelKind.STATIONARY_AR1:
            info.update(phi=self.phi, sigma_eps=self.sigma_eps)
        elif self.kind == KernelKind.RANDOM_WALK:
            info.update(sigma_eps=self.sigma_eps)
        elif self.kind == KernelKind.CUSTOM:
            info.update(length=self.length)
        return info

    def value(self, i: IndexLike, j: IndexLike) -> Union[float, np.ndarray]:
        """Covariance of time points i and j (1-based); broadcasts over arrays."""
        i = np.asarray(i)
        j = np.asarray(j)
        if np.any(i < 1) or np.any(j < 1):
            raise ValueError("time indices start at 1")
        if self.kind == KernelKind.INDEPENDENCE:
            out = (i == j).astype(float)
        elif self.kind == KernelKind.STATIONARY_AR1:
            out = self.gamma0 * np.power(self.phi, np.abs(i - j).astype(float))
        elif self.kind == KernelKind.RANDOM_WALK:
            out = self.sigma_eps ** 2 * np.minimum(i, j).astype(float)
        else:
            n = self.length
            if np.any(i > n) or np.any(j > n):
                raise ValueError(f"time index beyond custom table of length {n}")
            out = self._table[i - 1, j - 1]
        return float(out) if np.ndim(out) == 0 else out

    def _block_sum(self, a1, a2, b1, b2) -> np.ndarray:
        p = self._prefix
        return p[a2, b2] - p[a1, b2] - p[a2, b1] + p[a1, b1]

    def variance_array(self, s: np.ndarray, t: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Var(mean of t+1..u minus mean of s+1..t) for arrays of valid triples."""
        s = np.asarray(s, dtype=np.int64)
        t = np.asarray(t, dtype=np.int64)
        u = np.asarray(u, dtype=np.int64)
        left = (t - s).astype(float)
        right = (u - t).astype(float)

        if self.kind == KernelKind.INDEPENDENCE:
            return 1.0 / left + 1.0 / right

        if self.kind == KernelKind.RANDOM_WALK:
            # X_0 = 0: the min(i, j) terms tied to s cancel because weights sum to zero
            core = ((right + 1) * (2 * right + 1) / (6 * right)
                    + (left + 1) * (2 * left + 1) / (6 * left) - 1.0)
            return self.sigma_eps ** 2 * core

        if self.kind == KernelKind.STATIONARY_AR1:
            if self.phi > AR1_NEAR_UNIT_PHI:
                return self._near_unit_variance(left.astype(np.int64), right.astype(np.int64))
            phi = self.phi
            one_minus = (1.0 - phi) ** 2

            def self_sum(m):
                return m + 2.0 * phi * (m * (1.0 - phi) - (1.0 - np.power(phi, m))) / one_minus

            cross = phi * (1.0 - np.power(phi, left)) * (1.0 - np.power(phi, right)) / one_minus
            core = self_sum(right) / right ** 2 + self_sum(left) / left ** 2 - 2.0 * cross / (left * right)
            return self.gamma0 * core

        n = self.length
        if np.any(u > n):
            raise ValueError(f"window end beyond custom table of length {n}")
        lft = left.astype(np.longdouble)
        rgt = right.astype(np.longdouble)
        var = (self._block_sum(t, u, t, u) / rgt ** 2
               + self._block_sum(s, t, s, t) / lft ** 2
               - 2 * self._block_sum(s, t, t, u) / (lft * rgt))
        return var.astype(float)

    def _near_unit_variance(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """AR(1) window variance for phi close to 1.

        The weights sum to zero, so phi^|i-j| can be replaced by -(1 - phi^|i-j|).
        Every sum below is then positive and of order (1 - phi).
        """
        if left.size == 0:
            return np.empty(left.shape, dtype=float)
        delta = 1.0 - self.phi
        log_phi = math.log1p(-delta)
        scale = self.sigma_eps ** 2 / (delta * (1.0 + self.phi))
        pairs, inverse = np.unique(np.stack([left.ravel(), right.ravel()]), axis=1, return_inverse=True)
        values = np.empty(pairs.shape[1])
        for n in range(pairs.shape[1]):
            l, r = int(pairs[0, n]), int(pairs[1, n])
            gap = np.arange(1, l + r, dtype=np.int64)
            decay = -np.expm1(gap * log_phi)
            pair_count = np.minimum(np.minimum(gap, l + r - gap), min(l, r))
            within_right = 2.0 * np.dot(r - gap[:r - 1], decay[:r - 1])
            within_left = 2.0 * np.dot(l - gap[:l - 1], decay[:l - 1])
            core = 2.0 * np.dot(pair_count, decay) / (l * r) - within_right / r ** 2 - within_left / l ** 2
            values[n] = scale * core
        return values[np.asarray(inverse).reshape(-1)].reshape(left.shape)

    def variance(self, s: int, t: int, u: int) -> float:
        if self.shift_invariant:
            key = (t - s, u - t)
            cached = self._cache.get(key)
            if cached is None:
                cached = float(self.variance_array(np.array([0]), np.array([t - s]), np.array([u - s]))[0])
                self._cache[key] = cached
            return cached
        return float(self.variance_array(np.array([s]), np.array([t]), np.array([u]))[0])

    def dense(self, lo: int, hi: int) -> np.ndarray:
        """Covariance matrix of time points lo+1..hi."""
        idx = np.arange(lo + 1, hi + 1)
        return np.asarray(self.value(idx[:, None], idx[None, :]), dtype=float)


def _check_triple(s: int, t: int, u: int, kernel: CovarianceKernel):
    if not (0 <= s < t < u):
        raise ValueError(f"degenerate window (s={s}, t={t}, u={u}); need 0 <= s < t < u")
    if kernel.length is not None and u > kernel.length:
        raise ValueError(f"window end {u} beyond custom table of length {kernel.length}")


def kernel_value(kernel: CovarianceKernel, i: int, j: int) -> float:
    return kernel.value(i, j)


def mean_diff_variance(kernel: CovarianceKernel, s: int, t: int, u: int) -> float:
    """Variance of (mean of t+1..u) - (mean of s+1..t); cached by arm lengths for built-in kernels."""
    _check_triple(s, t, u, kernel)
    return kernel.variance(s, t, u)


def mean_diff_variance_oracle(kernel: CovarianceKernel, s: int, t: int, u: int) -> float:
    """Dense w' Sigma w evaluation; test reference only."""
    _check_triple(s, t, u, kernel)
    if u - s > ORACLE_MAX_WINDOW:
        raise ValueError(f"window of {u - s} points too large for the dense oracle (max {ORACLE_MAX_WINDOW})")
    left, right = t - s, u - t
    weights = np.concatenate([np.full(left, -1.0 / left), np.full(right, 1.0 / right)])
    sigma = kernel.dense(s, u)
    return float(weights @ sigma @ weights)


def b_of_h(kernel: CovarianceKernel, h: int, T: Optional[int] = None) -> float:
    """Effective variance constant B(h) = h^2 * Var(mean(h+1..2h) - mean(1..h))."""
    T = T if T is not None else kernel.length
    if h < 1 or (T is not None and 2 * h > T):
        raise ValueError(f"window half-length {h} outside 1..T/2 (T={T})")
    return h * h * mean_diff_variance(kernel, 0, h, 2 * h)


def kernel_from_ar1(phi: float, sigma_eps: float) -> CovarianceKernel:
    if phi == 1:
        return CovarianceKernel.random_walk(sigma_eps)
    if abs(phi) < 1:
        return CovarianceKernel.stationary_ar1(phi, sigma_eps)
    raise ValueError(f"AR(1) coefficient must satisfy |phi| < 1 or phi = 1, got {phi}")


def load_custom_kernel(path: Union[str, Path], T: Optional[int] = None) -> CovarianceKernel:
    """Read a covariance table from (i, j, value) triples or a dense T x T CSV."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Kernel file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, comment="#")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"cannot parse kernel file {path}: {e}") from e
    values = frame.to_numpy(dtype=float)

    is_triples = values.shape[1] == 3 and values.shape[0] != 3
    if is_triples:
        idx = values[:, :2]
        if np.any(idx != np.round(idx)) or np.any(idx < 1):
            raise DataError(f"{path}: triple indices must be positive integers")
        size = int(T if T is not None else idx.max())
        table = np.zeros((size, size))
        i = idx[:, 0].astype(int) - 1
        j = idx[:, 1].astype(int) - 1
        if np.any(i >= size) or np.any(j >= size):
            raise DataError(f"{path}: index beyond declared length {size}")
        table[i, j] = values[:, 2]
        table[j, i] = values[:, 2]
    else:
        table = values
        if T is not None and table.shape != (T, T):
            raise DataError(f"{path}: expected a {T}x{T} matrix, got {table.shape}")

    try:
        kernel = CovarianceKernel.custom(table)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e
    logger.info(f"Loaded custom covariance table of length {kernel.length} from {path}")
    return kernel


def rho_z(beta: float, zeta: float) -> float:
    """Detection-boundary constant of the dense regime."""
    if not 0 < zeta < 1:
        raise ValueError(f"zeta must lie in (0, 1), got {zeta}")
    lower, upper = (1 - zeta) / 2, 1 - zeta
    if not lower < beta <= upper:
        raise ValueError(f"beta must lie in ({lower:g}, {upper:g}], got {beta}")
    if beta <= 3 * (1 - zeta) / 4:
        return beta - lower
    return (math.sqrt(1 - zeta) - math.sqrt(max(0.0, 1 - zeta - beta))) ** 2


class TheoryCase(str, Enum):
    SPARSE_I = "sparse_i"
    DENSE_II = "dense_ii"


class TheoryParams(BaseModel):
    delta: float
    V: int = 1
    epsilon: float = 0.0
    beta: Optional[float] = None
    zeta: Optional[float] = None

    @validator('delta')
    def _positive_delta(cls, v):
        if v <= 0:
            raise ValueError("change magnitude delta must be positive")
        return v

    @validator('V')
    def _positive_count(cls, v):
        if v < 1:
            raise ValueError("sparsity count V must be a positive integer")
        return v

    @validator('epsilon')
    def _epsilon_range(cls, v):
        if not 0 <= v <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        return v

    @root_validator(skip_on_failure=True)
    def _beta_zeta(cls, values):
        beta, zeta = values.get('beta'), values.get('zeta')
        if zeta is not None and not 0 < zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if beta is not None:
            if zeta is None:
                raise ValueError("beta needs zeta")
            if not (1 - zeta) / 2 < beta <= 1 - zeta:
                raise ValueError(f"beta must lie in ({(1 - zeta) / 2:g}, {1 - zeta:g}]")
        return values


def required_h_over_b(case: TheoryCase, params: TheoryParams, T: float, N: float) -> float:
    """Window scale h / B(h) at which the detection guarantee starts to hold."""
    case = TheoryCase(case)
    scale = 4.0 * (1.0 + params.epsilon)
    if case == TheoryCase.SPARSE_I:
        return scale * math.log(T) / (params.V * params.delta ** 2)
    if params.beta is None:
        raise ValueError("the dense case needs beta and zeta")
    return scale * rho_z(params.beta, params.zeta) * math.log(N) / params.delta ** 2
