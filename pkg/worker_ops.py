"""
Data-parallel worker pool operations module
"""

import logging
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm.auto import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1, desc: Optional[str] = None,
                 threads: bool = False, chunksize: int = 16) -> List[R]:
    """Map `fn` over `items` keeping input order; `fn` must be picklable unless threads=True"""
    items = list(items)
    show = desc is not None and logger.isEnabledFor(logging.INFO)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=not show, unit="item")]

    executor_cls = ThreadPoolExecutor if threads else ProcessPoolExecutor
    with executor_cls(max_workers=jobs) as pool:
        mapped = pool.map(fn, items) if threads else pool.map(fn, items, chunksize=chunksize)
        return list(tqdm(mapped, total=len(items), desc=desc, disable=not show, unit="item"))
