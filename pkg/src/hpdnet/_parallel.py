"""Fixed-partition thread pool helpers.

Work is always cut into the same chunks regardless of worker count, so a
parallel run computes exactly what a serial run computes.
"""
import os
from concurrent.futures import ThreadPoolExecutor


def default_workers():
    cpus = os.cpu_count() or 1
    cap = os.environ.get("HPDNET_THREADS")
    if cap:
        try:
            return max(1, min(cpus, int(cap)))
        except ValueError:
            pass
    return cpus


def chunk_bounds(n, chunk):
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def map_chunks(fn, n, chunk, workers=None):
    """Apply ``fn(lo, hi)`` over fixed chunks of ``range(n)``; results in order."""
    bounds = chunk_bounds(n, chunk)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
