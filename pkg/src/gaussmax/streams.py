"""Keyed counter-based random streams and the worker pool.

Every unit of work (a sampling chunk, an outer bootstrap replication) gets
its own Philox stream keyed by ``(seed, domain, index)``, so results never
depend on how many workers process the units or in which order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")

# stream domains; never reuse a value for a different purpose
SAMPLER = 1
DATA = 2
MULTIPLIER = 3
AUX = 4


def stream(seed: int, domain: int, index: int) -> np.random.Generator:
    key = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=(int(domain), int(index)))
    return np.random.Generator(np.random.Philox(key))


def default_workers() -> int:
    env = os.environ.get("GAUSSMAX_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[int], T], indices: Iterable[int], workers: int | None = None) -> list[T]:
    """``[fn(i) for i in indices]`` on a thread pool; output order follows ``indices``."""
    indices = list(indices)
    workers = workers or default_workers()
    if workers <= 1 or len(indices) <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices))
