"""Chain scheduling across worker processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

WORKERS_ENV = "SPATIALVOTE_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_chains(worker, jobs: list, workers: int | None = None) -> list:
    """Run ``worker(job)`` for every job, in job order.

    Each job carries its own chain index and therefore its own random
    substream, so results do not depend on the number of workers.
    """
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(worker, jobs))
