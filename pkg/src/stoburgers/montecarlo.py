"""Deterministic fan-out of Monte Carlo paths over a process pool.

Paths are cut into fixed chunks of ``CHUNK`` consecutive indices.  A chunk is
always computed the same way whichever process runs it, and results are
concatenated in index order, so the output does not depend on the worker
count.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

CHUNK = 64
WORKERS_ENV = "STOBURGERS_WORKERS"


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def chunks(paths: int, chunk: int = CHUNK):
    return [(s, min(chunk, paths - s)) for s in range(0, paths, chunk)]


def map_paths(task, paths: int, workers: int | None = None, chunk: int = CHUNK) -> dict:
    """Run ``task(start, count) -> dict of per-path arrays`` over all chunks.

    ``task`` must be picklable when ``workers > 1``.  Returns the per-key
    concatenation in path order.
    """
    if paths < 1:
        raise ValueError("need at least one path")
    workers = resolve_workers(workers)
    jobs = chunks(paths, chunk)
    if workers == 1 or len(jobs) == 1:
        parts = [task(s, c) for s, c in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(task, *zip(*jobs)))
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
