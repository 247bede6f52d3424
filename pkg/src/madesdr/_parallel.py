"""Seed spawning and an order-preserving process pool map."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def child_seeds(seed, count: int) -> list[int]:
    """Independent integer seeds derived from a master seed (or seed sequence entropy)."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def resolve_threads(threads=None) -> int:
    """Explicit value, else ``MADE_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("MADE_THREADS", "").strip()
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def pool_map(func, tasks, threads=1) -> list:
    """``[func(t) for t in tasks]``, in processes when ``threads > 1``; order is kept."""
    tasks = list(tasks)
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(func, tasks))
    return [func(t) for t in tasks]
