"""
Selection overhead benchmark and complexity scaling probes
"""

import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from selection.baselines import kmnc_greedy
from selection.report import rank_descending
from selection.runner import SelectorInputs, run_selector
from utils.timing import Timer

logger = logging.getLogger(__name__)

ORDERING_PHASE = 'ordering'


def overhead_bench(inputs: SelectorInputs, selectors: Sequence[str], budgets: Sequence) -> List[Dict]:
    """
    Wall-clock cost of each selector at each budget

    Each selector runs once unmeasured to warm caches. Random selection is
    reported as zero cost.

    Returns:
        One row per (selector, budget): scoring_s, ordering_s, total_s
    """
    rows = []
    for name in selectors:
        if name != 'random':
            logger.info(f"Warm-up run of {name}")
            run_selector(name, inputs, budgets[0])
        for budget in budgets:
            if name == 'random':
                scoring = ordering = 0.0
            else:
                report = run_selector(name, inputs, budget)
                ordering = report.timings.get(ORDERING_PHASE, 0.0)
                scoring = report.timings['total'] - ordering
            rows.append({
                'selector': name,
                'budget': budget,
                'scoring_s': scoring,
                'ordering_s': ordering,
                'total_s': scoring + ordering,
            })
            logger.info(f"{name} @ {budget}: scoring {scoring:.4f}s, ordering {ordering:.4f}s")
    return rows


def _best_of(fn, repeats: int) -> float:
    best = None
    for _ in range(repeats):
        timer = Timer()
        with timer:
            fn()
        best = timer.seconds if best is None else min(best, timer.seconds)
    return best


def measure_ordering_scaling(n: int, seed: int = 0, repeats: int = 5) -> Tuple[float, float]:
    """Seconds to rank n and 2n random scores (best of repeats)"""
    rng = np.random.default_rng(seed)
    small = rng.random(n)
    large = rng.random(2 * n)
    return _best_of(lambda: rank_descending(small), repeats), _best_of(lambda: rank_descending(large), repeats)


def measure_greedy_scaling(n: int, neurons: int, k_bins: int = 1000, budget_fraction: float = 0.1,
                           seed: int = 0, repeats: int = 3) -> Tuple[float, float]:
    """
    Seconds of KMNC greedy ordering on n and 2n synthetic candidates

    The neuron count is fixed and the budget scales with n, so the work grows
    quadratically in n.
    """
    rng = np.random.default_rng(seed)

    def bins_for(count: int) -> np.ndarray:
        return rng.integers(0, k_bins, size=(count, neurons))

    small, large = bins_for(n), bins_for(2 * n)
    budget_small = max(1, int(budget_fraction * n))
    budget_large = max(1, int(budget_fraction * 2 * n))
    return (_best_of(lambda: kmnc_greedy(small, k_bins, budget_small), repeats),
            _best_of(lambda: kmnc_greedy(large, k_bins, budget_large), repeats))
