#!/usr/bin/env python3
"""
Window schedules and the approximating sets of triples scanned at each scale.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from src.configs.config import DEFAULT_GROWTH

logger = logging.getLogger(__name__)

THEORY_MAX_SCALE = 2000


@dataclass(frozen=True)
class WindowSchedule:
    """Arm lengths h_i and grid spacings d_i, scale i = 1..i_T (stored 0-based)."""
    h: Tuple[int, ...]
    d: Tuple[int, ...]
    growth: Optional[float] = DEFAULT_GROWTH
    T: Optional[int] = None
    kind: str = "experimental"

    def __post_init__(self):
        if len(self.h) != len(self.d):
            raise ValueError("h and d must have equal length")
        for i, (h, d) in enumerate(zip(self.h, self.d), start=1):
            if d < 1 or d > h:
                raise ValueError(f"scale {i}: need 1 <= d_i <= h_i, got h={h}, d={d}")
        if any(b <= a for a, b in zip(self.h, self.h[1:])):
            raise ValueError("window lengths must be strictly increasing")

    @property
    def i_T(self) -> int:
        return len(self.h)

    def arm(self, i: int) -> int:
        return self.h[i - 1]

    def spacing(self, i: int) -> int:
        return self.d[i - 1]

    def describe(self) -> dict:
        return {"kind": self.kind, "growth": self.growth, "T": self.T, "i_T": self.i_T}


class ScanTriple(NamedTuple):
    s: int
    t: int
    u: int
    scale: int
    offset: int


def build_schedule(T: int, growth: float = DEFAULT_GROWTH) -> WindowSchedule:
    """h_1 = 1, h_{i+1} = ceil(growth * h_i), d_i = floor(h_i / i), kept while h_i + d_i <= T."""
    if T < 2:
        raise ValueError(f"series length must be at least 2, got {T}")
    if not growth > 1:
        raise ValueError(f"growth factor must exceed 1, got {growth}")
    # Exact rational product: 1.1 * 10 must give 11, not 11.000000000000002
    factor = Fraction(str(growth))
    hs: List[int] = []
    ds: List[int] = []
    h, i = 1, 1
    while True:
        d = h // i
        assert d >= 1, "h_i >= i holds for every growth factor above 1"
        if h + d > T:
            break
        hs.append(h)
        ds.append(d)
        h = max(h + 1, math.ceil(factor * h))
        i += 1
    return WindowSchedule(h=tuple(hs), d=tuple(ds), growth=float(growth), T=T, kind="experimental")


def theory_schedule(i_max: int, T: Optional[int] = None) -> WindowSchedule:
    """h_i ~ exp(i / log i), d_i ~ h_i / i, for experiments on the asymptotic conditions.

    h_i is bumped to h_{i-1} + 1 where i / log i dips (its minimum sits at i = e).
    With T given, scales stop once h_i + d_i > T.
    """
    if i_max < 2:
        raise ValueError(f"i_max must be at least 2, got {i_max}")
    if i_max > THEORY_MAX_SCALE:
        raise ValueError(f"i_max above {THEORY_MAX_SCALE} overflows exp(i / log i)")
    hs: List[int] = []
    ds: List[int] = []
    for i in range(1, i_max + 1):
        h = 1 if i == 1 else math.ceil(math.exp(i / math.log(i)))
        if hs:
            h = max(h, hs[-1] + 1)
        d = max(1, h // i)
        if T is not None and h + d > T:
            break
        hs.append(h)
        ds.append(d)
    return WindowSchedule(h=tuple(hs), d=tuple(ds), growth=None, T=T, kind="theory")


def max_scale(schedule: WindowSchedule, g: int) -> int:
    """i_g = max{i : h_i + d_i <= g}, 0 if no scale fits."""
    if g < 2:
        return 0
    if schedule.T is not None and g > schedule.T:
        raise ValueError(f"segment length {g} exceeds the schedule's series length {schedule.T}")
    best = 0
    for i, (h, d) in enumerate(zip(schedule.h, schedule.d), start=1):
        if h + d <= g:
            best = i
    return best


def approximating_arrays(schedule: WindowSchedule, i: int, g: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Offsets k and local triples (s, t, u) of A_i(g) as integer arrays."""
    if not 1 <= i <= schedule.i_T:
        raise ValueError(f"scale {i} outside 1..{schedule.i_T}")
    h, d = schedule.arm(i), schedule.spacing(i)
    count = (g - 1) // d
    k = np.arange(1, count + 1, dtype=np.int64)
    t = k * d
    s = np.maximum(0, t - h)
    u = np.minimum(t + h, g)
    keep = (s < t) & (t < u)
    # (g - 1) // d already keeps t below g
    assert keep.all()
    return k, s, t, u


def approximating_set(schedule: WindowSchedule, i: int, g: int) -> List[ScanTriple]:
    k, s, t, u = approximating_arrays(schedule, i, g)
    return [ScanTriple(int(a), int(b), int(c), i, int(o)) for o, a, b, c in zip(k, s, t, u)]


def schedule_log_complexity(schedule: WindowSchedule, i_max: Optional[int] = None) -> float:
    """log of sum_{i <= i_max} h_i / d_i."""
    i_max = schedule.i_T if i_max is None else i_max
    if i_max < 1:
        raise ValueError("schedule has no admissible scale")
    return math.log(sum(h / d for h, d in zip(schedule.h[:i_max], schedule.d[:i_max])))
