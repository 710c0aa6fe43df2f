"""Order-preserving thread pool; results never depend on the worker count."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_THREADS = "NONHYP_THREADS"


def worker_count(requested: int | None = None) -> int:
    """``requested`` (default 1) capped by $NONHYP_THREADS when set."""
    n = 1 if requested is None else max(1, int(requested))
    cap = os.environ.get(ENV_THREADS)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]`` evaluated on up to ``workers`` threads."""
    seq: Sequence[T] = list(items)
    n = worker_count(workers)
    if n == 1 or len(seq) <= 1:
        return [fn(x) for x in seq]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, seq))
