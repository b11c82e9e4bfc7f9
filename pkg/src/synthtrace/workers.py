"""Deterministic worker pool for per-image tasks.

Results always come back in input order, so every merge downstream is
independent of the thread count. numpy FFTs, scipy filters and Pillow
codecs release the GIL, which makes threads worthwhile here.
"""

import logging
import os
from concurrent import futures
from dataclasses import dataclass
from typing import Callable, Generic, Iterable, Optional, Sequence, TypeVar

from synthtrace.constants import THREADS_ENV_VAR
from synthtrace.errors import ValidationError

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class ItemOutcome(Generic[R]):
    """Value or error of one task."""
    index: int
    value: Optional[R] = None
    error: Optional[BaseException] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def default_threads() -> int:
    """Thread count from SYNTHTRACE_THREADS, else the number of cores."""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            value = int(raw)
            if value >= 1:
                return value
        except ValueError:
            pass
        log.warning("Ignoring invalid %s=%r.", THREADS_ENV_VAR, raw)
    return os.cpu_count() or 1


def _validate(threads: int) -> int:
    if threads < 1:
        raise ValidationError(f"threads must be >= 1, got {threads}")
    return threads


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Apply fn to every item; the first exception propagates."""
    threads = _validate(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with futures.ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))


def parallel_collect(
    fn: Callable[[T], R], items: Iterable[T], threads: int = 1,
) -> list[ItemOutcome[R]]:
    """Apply fn to every item, capturing per-item failures instead of raising."""
    threads = _validate(threads)
    indexed = list(enumerate(items))

    def _run(pair: tuple[int, T]) -> ItemOutcome[R]:
        index, item = pair
        try:
            return ItemOutcome(index, value=fn(item))
        except Exception as e:  # collected and reported by the caller
            log.debug("Task %d failed: %s", index, e, exc_info=True)
            return ItemOutcome(index, error=e)

    return parallel_map(_run, indexed, threads)
