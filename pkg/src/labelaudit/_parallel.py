"""Fork-based task fan-out for the embarrassingly parallel experiment grids.

Workers are forked after the caller has built (and pre-warmed) any large
shared read-only state, so children inherit it copy-on-write and task
arguments stay tiny. Results are returned in task order, which keeps every
computation schedule-independent: the same inputs give byte-identical
outputs at any job count.
"""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

JOBS_ENV_VAR = "LABELAUDIT_JOBS"


def effective_jobs(jobs: int | None) -> int:
    if jobs is not None:
        return max(1, int(jobs))
    env = os.environ.get(JOBS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def map_tasks(fn: Callable, tasks: Sequence[tuple], jobs: int | None = None) -> list:
    """Apply a module-level function to each argument tuple, in order."""
    jobs = effective_jobs(jobs)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks)), mp_context=ctx) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]
