"""
Worker pool helpers with scheduling-independent results
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')

# Chunk boundaries never depend on the worker count, so every chunk sees
# the same batch shape (and the same BLAS blocking) for any --workers value.
DEFAULT_CHUNK = 256


def resolve_workers(workers: Optional[int] = None) -> int:
    """Return the effective worker count (None or 0 means all cores)"""
    if not workers or workers < 1:
        return os.cpu_count() or 1
    return workers


def chunk_ranges(n: int, chunk_size: int = DEFAULT_CHUNK) -> List[Tuple[int, int]]:
    """
    Split range(n) into fixed [start, stop) chunks

    Args:
        n: Number of items
        chunk_size: Items per chunk (last chunk may be shorter)

    Returns:
        List of (start, stop) tuples in ascending order
    """
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    return [(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """
    Apply fn to every item, returning results in item order

    Args:
        fn: Pure function of one item
        items: Work items
        workers: Thread count cap (None = all cores)

    Returns:
        List of results, results[i] == fn(items[i])
    """
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug(f"Mapping {len(items)} items over {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def tree_reduce(values: Sequence[T], op: Callable[[T, T], T]) -> T:
    """
    Reduce values with a fixed-order pairwise tree

    The pairing depends only on len(values), so floating point sums come
    out bit-identical however the values were produced.

    Args:
        values: Non-empty sequence of partial results
        op: Associative binary operation

    Returns:
        The reduced value
    """
    if not values:
        raise ValueError("tree_reduce needs at least one value")

    level = list(values)
    while len(level) > 1:
        paired = [op(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            paired.append(level[-1])
        level = paired
    return level[0]
