"""
Shared helpers: worker pool, timing, configuration and report export
"""

from .parallel import chunk_ranges, parallel_map, resolve_workers, tree_reduce
from .timing import PhaseTimer, Timer

__all__ = ['chunk_ranges', 'parallel_map', 'resolve_workers', 'tree_reduce', 'PhaseTimer', 'Timer']
