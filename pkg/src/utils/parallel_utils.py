#!/usr/bin/env python3

import logging
import sys
from typing import Callable, List, Optional, TypeVar

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from src.configs.config import THREADS

logger = logging.getLogger(__name__)

R = TypeVar("R")

# First spawn-key entry: studies and null calibration never share noise
STUDY_STREAM = 0
CALIBRATION_STREAM = 1


def replicate_rng(seed: int, r: int, stream: int = STUDY_STREAM) -> np.random.Generator:
    """Independent stream for replicate r: SeedSequence(seed, spawn_key=(stream, r))."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, r)))


def _run_one(func: Callable[..., R], seed: int, r: int, stream: int, kwargs: dict) -> R:
    return func(replicate_rng(seed, r, stream), **kwargs)


def run_replicates(func: Callable[..., R], reps: int, seed: int, n_jobs: Optional[int] = None,
                   desc: str = "Replicates", progress: bool = True, stream: int = STUDY_STREAM,
                   **kwargs) -> List[R]:
    """Call func(rng, **kwargs) once per replicate; results come back in replicate order.

    Each replicate draws from its own seed substream, so results do not
    depend on the worker count.
    """
    if reps < 1:
        raise ValueError(f"need at least one replicate, got {reps}")
    n_jobs = THREADS if n_jobs is None else n_jobs
    logger.info(f"{desc}: {reps} replicate(s) on {n_jobs} worker(s), seed {seed}, stream {stream}")
    jobs = (delayed(_run_one)(func, seed, r, stream, kwargs) for r in range(reps))
    results = Parallel(n_jobs=n_jobs, return_as="generator")(jobs)
    show = progress and sys.stderr.isatty()
    return list(tqdm(results, total=reps, desc=desc, disable=not show))
