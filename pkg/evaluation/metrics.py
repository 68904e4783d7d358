"""
Fault detection metrics: FDR, fault types and the fault type coverage curve
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from selection.report import SelectionReport, resolve_budget

logger = logging.getLogger(__name__)

# 1% .. 20% in 1% steps
FTCR_BUDGETS: Tuple[float, ...] = tuple(round(0.01 * i, 2) for i in range(1, 21))


def fdr(selected: Sequence[int], labels: Sequence[int], predictions: Sequence[int]) -> float:
    """
    Fault detection rate: share of selected candidates the model misclassifies

    Args:
        selected: Selected candidate indices
        labels: Ground-truth label per candidate
        predictions: Predicted class per candidate image

    Raises:
        ValueError: on an empty selection
    """
    selected = np.asarray(selected, dtype=np.int64)
    if selected.size == 0:
        raise ValueError("FDR is undefined for an empty selection")
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    return float(np.mean(labels[selected] != predictions[selected]))


def report_fdr(report: SelectionReport, budget: Optional[int] = None) -> float:
    """FDR of a report's selection from its cached labels and predictions"""
    if report.labels is None or report.predictions is None:
        raise ValueError(f"{report.selector} report carries no cached predictions")
    count = report.budget if budget is None else budget
    return fdr(report.order[:count], report.labels, report.predictions)


def fault_types(labels: Sequence[int], predictions: Sequence[int]) -> Set[Tuple[int, int]]:
    """Distinct (true label, predicted label) pairs over misclassified cases"""
    return {(int(t), int(p)) for t, p in zip(labels, predictions) if t != p}


@dataclass
class FtcrCurve:
    """
    Fault type coverage per budget

    rates is None (and no_fault True) when the candidate set has no fault at
    all; auc is the mean rate over the budgets, as a percentage.
    """

    budgets: List[float]
    rates: Optional[List[float]]
    auc: Optional[float]
    total_types: int

    @property
    def no_fault(self) -> bool:
        return self.rates is None


def ftcr_curve(order: Sequence[int], labels: Sequence[int], predictions: Sequence[int],
               budgets: Sequence[float] = FTCR_BUDGETS) -> FtcrCurve:
    """
    Share of all occurring fault types captured by each prefix of a ranking

    Args:
        order: Prioritized ranking covering every candidate
        labels: Ground-truth label per candidate
        predictions: Predicted class per candidate
        budgets: Budget grid (fractions or counts)

    Returns:
        FtcrCurve; a set without faults yields the explicit no-fault marker
    """
    order = np.asarray(order, dtype=np.int64)
    n = len(labels)
    if sorted(order.tolist()) != list(range(n)):
        raise ValueError(f"prioritized order must be a permutation of the {n} candidates")

    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    total = fault_types(labels, predictions)
    if not total:
        logger.warning("No fault types among the candidates; FTCR undefined")
        return FtcrCurve(list(budgets), None, None, 0)

    rates = []
    for budget in budgets:
        top = order[:resolve_budget(budget, n)]
        rates.append(len(fault_types(labels[top], predictions[top])) / len(total))
    auc = float(np.mean(rates)) * 100.0
    return FtcrCurve(list(budgets), rates, auc, len(total))


@dataclass
class EvalReport:
    """
    Metrics of several selectors on one candidate set

    fdr and retrain map selector -> budget -> value, ftcr maps selector ->
    curve. budgets keeps the order rows are written in.
    """

    budgets: List[float]
    selectors: List[str]
    fdr: Dict[str, Dict[float, float]] = field(default_factory=dict)
    ftcr: Dict[str, FtcrCurve] = field(default_factory=dict)
    retrain: Dict[str, Dict[float, float]] = field(default_factory=dict)
    baseline_accuracy: Optional[float] = None
    config: Dict = field(default_factory=dict)
    timings: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def table(self, values: Dict[str, Dict[float, float]]) -> List[List]:
        """Rows of [budget, value per selector] in budget order"""
        rows = []
        for budget in self.budgets:
            rows.append([budget] + [values.get(name, {}).get(budget) for name in self.selectors])
        return rows

    def ftcr_rows(self) -> List[Tuple[str, float, Optional[float]]]:
        """Long form (selector, budget, rate); a no-fault curve has one row with rate None"""
        rows = []
        for name in self.selectors:
            curve = self.ftcr.get(name)
            if curve is None:
                continue
            if curve.no_fault:
                rows.append((name, None, None))
                continue
            rows.extend((name, b, r) for b, r in zip(curve.budgets, curve.rates))
        return rows
