"""Keyed random streams and deterministic chunked execution.

Every stream is a pure function of ``(seed, *key)``, so results never depend
on the order in which chunks are executed or on the number of threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

_MASK64 = (1 << 64) - 1


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent PCG64 generator keyed by ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def chunk_bounds(total: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]


def map_chunks(
    fn: Callable[[int, int, int], T],
    total: int,
    chunk_size: int,
    threads: int = 1,
) -> list[T]:
    """Run ``fn(chunk_index, lo, hi)`` over fixed chunks; results in chunk order."""
    bounds = chunk_bounds(total, chunk_size)
    if threads <= 1 or len(bounds) == 1:
        return [fn(i, lo, hi) for i, (lo, hi) in enumerate(bounds)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, i, lo, hi) for i, (lo, hi) in enumerate(bounds)]
        return [f.result() for f in futures]


def frozen(arr: Sequence | np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out
