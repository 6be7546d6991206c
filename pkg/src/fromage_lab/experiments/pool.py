"""Bounded worker pool for sweep cells and per-job seed derivation."""

from __future__ import annotations

import concurrent.futures
import logging
from collections.abc import Callable, Iterable
from typing import TypeVar

import numpy as np

log = logging.getLogger(__name__)

J = TypeVar("J")
R = TypeVar("R")


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed for a job identified by ``parts``."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def run_jobs(fn: Callable[[J], R], jobs: Iterable[J], *, workers: int = 1) -> list[R]:
    """
    Apply ``fn`` to every job and return the results in job order.

    ``workers <= 1`` runs inline; otherwise a thread pool of that size is used.
    Completion order never affects the result order.
    """
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    log.debug(f"running {len(jobs)} jobs on {workers} threads")
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, jobs))
