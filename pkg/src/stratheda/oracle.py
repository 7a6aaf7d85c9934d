"""Exhaustive search over all set partitions of the basic strata."""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache
from itertools import islice
from typing import Iterator

import numpy as np

from .bethel import Evaluator
from .errors import GuardError

DEFAULT_MAX_L = 14


@lru_cache(maxsize=None)
def bell(n: int) -> int:
    """Number of set partitions of an n-element set (Bell triangle)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def enumerate_partitions(L: int, max_L: int = DEFAULT_MAX_L, allow_large: bool = False) -> Iterator[np.ndarray]:
    """Yield every restricted growth string of length L, 1-based.

    Order is lexicographic: the all-in-one partition comes first and the
    all-singletons partition last. Memory is O(L).
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    if L > max_L and not allow_large:
        raise GuardError(f"L={L} gives Bell({L})={bell(L):.3e} partitions; pass allow_large to override")
    a = np.ones(L, dtype=np.int64)
    # prefix_max[i] = max(a[0..i])
    prefix_max = np.ones(L, dtype=np.int64)
    yield a.copy()
    while L > 1:
        i = L - 1
        while i > 0 and a[i] > prefix_max[i - 1]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        a[i + 1 :] = 1
        prefix_max[i] = max(prefix_max[i - 1], a[i])
        prefix_max[i + 1 :] = prefix_max[i]
        yield a.copy()


@dataclass(frozen=True)
class GridResult:
    labels: np.ndarray
    quality: float
    evaluated: int
    seconds: float


def grid_search(
    instance,
    epsilons=None,
    options=None,
    threads: int | None = 1,
    chunk: int = 2048,
    max_L: int = DEFAULT_MAX_L,
    allow_large: bool = False,
) -> GridResult:
    """Global optimum by brute force; ties go to the lexicographically first labels."""
    evaluator = Evaluator(instance, epsilons, options, cache_size=0)
    start = time.perf_counter()
    it = enumerate_partitions(instance.L, max_L, allow_large)
    best_q = np.inf
    best = None
    count = 0
    while True:
        batch = list(islice(it, chunk))
        if not batch:
            break
        qualities = evaluator.map(batch, threads)
        for lab, q in zip(batch, qualities):
            if q < best_q:
                best_q, best = q, lab
        count += len(batch)
    return GridResult(best, float(best_q), count, time.perf_counter() - start)
