"""Order-preserving process-pool map used by the sweeps."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

WORKERS_ENV = "SPISIM_WORKERS"


def resolve_workers(workers: int | None = None) -> int:
    """Explicit argument wins, then the environment override, then 1."""
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError(f"worker count must be positive, got {workers}")
    return workers


def ordered_map(func: Callable, items: Sequence, workers: int | None = None) -> list:
    """``[func(x) for x in items]``, optionally spread over processes; output order is input order."""
    workers = resolve_workers(workers)
    items = list(items)
    if workers == 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items, chunksize=1))


def guarded(func: Callable) -> Callable:
    """Wrap ``func`` so exceptions come back as values instead of aborting a sweep."""
    return _Guarded(func)


class _Guarded:
    def __init__(self, func):
        self.func = func

    def __call__(self, item):
        try:
            return self.func(item), None
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            return None, f"{type(exc).__name__}: {exc}"

