"""Fixed worker pool over a deterministic task list."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

THREADS_ENV = "DGFF_LAB_THREADS"


def resolve_workers(requested: int | None = None) -> int:
    """Worker count; the DGFF_LAB_THREADS environment variable wins over the flag."""
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return max(1, int(requested or 1))


def _call(packed):
    fn, args = packed
    return fn(*args)


def map_tasks(fn, arg_tuples, workers: int = 1) -> list:
    """Results of fn(*args) in task order, sequentially or on a process pool."""
    arg_tuples = list(arg_tuples)
    if workers <= 1 or len(arg_tuples) <= 1:
        return [fn(*a) for a in arg_tuples]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, [(fn, a) for a in arg_tuples]))
