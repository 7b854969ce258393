"""Process-pool plumbing for trajectory blocks.

This module must stay import-light (no numpy): the worker initializer
caps BLAS threads through environment variables, which only works if
they are set before numpy loads in the child process.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager, nullcontext
from multiprocessing import get_context

WORKER_ENV_VAR = "SLSYNC_MAX_WORKERS"


def _init_worker():
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def worker_count(requested: int | None = None) -> int:
    """Effective worker count after the environment cap."""
    n = requested if requested and requested > 0 else (os.cpu_count() or 1)
    cap = os.environ.get(WORKER_ENV_VAR)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


@contextmanager
def block_executor(workers: int | None = None):
    """Yield a spawn-based pool, or None when one worker suffices.

    Spawned workers re-import the package cleanly (no fork + BLAS-thread
    hazards) and run single-threaded BLAS so block results do not depend
    on scheduling.
    """
    n = worker_count(workers)
    if n <= 1:
        with nullcontext():
            yield None
        return
    ctx = get_context("spawn")
    with ProcessPoolExecutor(
        max_workers=n, mp_context=ctx, initializer=_init_worker
    ) as pool:
        yield pool
