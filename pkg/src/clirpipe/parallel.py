"""Within-host work scheduling.

Results always come back in submission order, so nothing downstream can
depend on which worker finished first.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def split_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into at most ``parts`` contiguous, non-empty ranges."""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    parts = min(parts, n) or 1
    base, extra = divmod(n, parts)
    out = []
    start = 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        out.append((start, start + size))
        start += size
    return [r for r in out if r[1] > r[0]] if n else []


class LocalScheduler:
    """Runs jobs inline (``workers=1``) or on a process pool."""

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = workers

    def map(
        self,
        fn: Callable[..., R],
        items: Iterable[T],
        initializer: Optional[Callable] = None,
        initargs: tuple = (),
    ) -> list[R]:
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            if initializer is not None:
                initializer(*initargs)
            return [fn(x) for x in items]
        with ProcessPoolExecutor(
            max_workers=min(self.workers, len(items)), initializer=initializer, initargs=initargs
        ) as pool:
            return list(pool.map(fn, items))
