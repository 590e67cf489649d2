"""Worker-pool helper with deterministic, index-ordered reduction."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

__all__ = ["worker_count", "parallel_map"]


def worker_count(requested: int | None = None) -> int:
    """Workers to use: ``requested`` or the CPU count, capped by ``COXSCALE_THREADS``."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("COXSCALE_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def parallel_map(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]`` computed on a process pool when more than one worker is available.

    Results are returned in input order whatever the completion order.
    ``fn`` and the items must be picklable when a pool is used.
    """
    items = list(items)
    n = min(worker_count(workers), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * n))))
