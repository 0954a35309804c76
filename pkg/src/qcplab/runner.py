"""Deterministic trial execution: per-trial seed streams and a thread pool.

Trial i always runs on the rng stream derived from (master seed, stream,
i), and results are merged in trial order, so reports are bit-identical
for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

_SEED_MASK = (1 << 63) - 1


def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed & _SEED_MASK, spawn_key=(stream, trial))
    return np.random.default_rng(ss)


def worker_count() -> int:
    env = os.environ.get("QCP_THREADS")
    if env:
        return max(1, int(env))
    return 1


def run_trials(
    trials: int, worker: Callable[[int], T], threads: int | None = None
) -> list[T]:
    threads = threads if threads is not None else worker_count()
    if threads <= 1 or trials <= 1:
        return [worker(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(trials)))


def ci95(wins: int, trials: int) -> tuple[float, float]:
    """Normal-approximation 95% interval around the observed rate."""
    p = wins / trials
    half = 1.959963984540054 * math.sqrt(max(p * (1.0 - p), 1e-12) / trials)
    return (max(0.0, p - half), min(1.0, p + half))


def three_sigma(p: float, trials: int) -> float:
    """3-sigma tolerance for a Bernoulli(p) mean over the given trial count."""
    return 3.0 * math.sqrt(max(p * (1.0 - p), 1e-12) / trials)


def merge_rates(values: Sequence[float]) -> float:
    return float(sum(values) / len(values)) if values else 0.0
