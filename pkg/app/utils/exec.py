# app/utils/exec.py
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar
import logging

logger = logging.getLogger("bme-spot.exec")

T = TypeVar("T")
R = TypeVar("R")


def run_parallel(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """
    Apply fn to every item, optionally on a thread pool.
    Results come back in input order whatever the scheduling.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"[EXEC] {len(items)} jobs on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
