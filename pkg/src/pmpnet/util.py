"""Seed derivation and the PMP_THREADS-capped worker pool."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def derive_seed(base, *keys):
    """Stable child seed from a base seed and integer keys."""
    ss = np.random.SeedSequence([int(base), *[int(k) for k in keys]])
    return int(ss.generate_state(1)[0])


def worker_count():
    raw = os.environ.get("PMP_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, items):
    """Map preserving order; uses a thread pool when PMP_THREADS > 1.

    Results are joined in submission order, so the output is independent
    of the worker count.
    """
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
