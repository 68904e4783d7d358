"""
Wall-clock phase timing
"""

import time
from contextlib import contextmanager
from typing import Dict, Iterator


class Timer:
    """Context manager measuring one block in nanoseconds"""

    def __enter__(self):
        self.start = time.perf_counter_ns()
        self.end = None
        self.elapsed = None
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.end = time.perf_counter_ns()
        self.elapsed = self.end - self.start

    @property
    def seconds(self) -> float:
        return (self.elapsed or 0) / 1e9


class PhaseTimer:
    """Accumulates seconds per named phase"""

    def __init__(self):
        self.phases: Dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        timer = Timer()
        with timer:
            yield
        self.phases[name] = self.phases.get(name, 0.0) + timer.seconds

    def total(self) -> float:
        return sum(self.phases.values())

    def as_dict(self) -> Dict[str, float]:
        data = dict(self.phases)
        data['total'] = self.total()
        return data
