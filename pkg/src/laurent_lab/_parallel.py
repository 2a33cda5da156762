"""Ordered thread-pool map.

Work items are fixed up front and results come back in submission order,
so reductions never depend on the thread count.  LAPACK releases the GIL,
which is where the time goes.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "LAURENT_LAB_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def ordered_map(fn, items, threads: int | None = None) -> list:
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def chunks(n: int, size: int) -> list[range]:
    return [range(i, min(i + size, n)) for i in range(0, n, size)]
