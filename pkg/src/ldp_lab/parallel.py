"""
Deterministic fan-out of per-path Monte Carlo work

Paths are cut into fixed chunks of CHUNK_PATHS consecutive indices. The
chunking never depends on the worker count, each chunk is processed
identically whichever thread runs it, and results come back in chunk order,
so reductions are bit-identical for any number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Tuple

from .errors import InvalidArgumentError
from . import log_utils


def chunk_ranges(n: int, chunk_size: int) -> List[Tuple[int, int]]:
    if n < 1:
        raise InvalidArgumentError(f"number of paths must be >= 1, got {n}", module="parallel")
    if chunk_size < 1:
        raise InvalidArgumentError(f"chunk size must be >= 1, got {chunk_size}", module="parallel")
    return [(first, min(chunk_size, n - first)) for first in range(0, n, chunk_size)]


def map_chunks(fn: Callable[[int, int], object], n: int, chunk_size: int, workers: int = 1) -> list:
    """
    Apply fn(first_index, count) to every chunk

    Args:
        fn: Chunk worker; must not mutate shared state
        n: Total number of paths
        chunk_size: Paths per chunk
        workers: Thread count

    Returns:
        list: fn results in chunk order
    """
    ranges = chunk_ranges(n, chunk_size)
    log_utils.debug_log(f"{n} path(s) in {len(ranges)} chunk(s) on {workers} worker(s)")
    if workers <= 1 or len(ranges) == 1:
        return [fn(first, count) for first, count in ranges]
    with ThreadPoolExecutor(max_workers=min(workers, len(ranges))) as ex:
        return list(ex.map(lambda r: fn(*r), ranges))
