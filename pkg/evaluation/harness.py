"""
Run several selectors on one candidate set and collect FDR, FTCR and
optional retraining deltas
"""

import logging
from typing import Optional, Sequence

import numpy as np

from evaluation.metrics import FTCR_BUDGETS, EvalReport, ftcr_curve, report_fdr
from evaluation.retrain import retrain_experiment
from loaders.idx_loader import LabeledDataset
from network.trainer import TrainConfig
from selection.report import resolve_budget
from selection.runner import SelectorInputs, run_selector

logger = logging.getLogger(__name__)


def evaluate_selectors(inputs: SelectorInputs, selectors: Sequence[str], budgets: Sequence[float],
                       test_set: Optional[LabeledDataset] = None,
                       retrain_config: Optional[TrainConfig] = None) -> EvalReport:
    """
    Evaluate every selector at every budget

    Each selector ranks the candidates once, at the largest budget needed
    (including the 20% FTCR grid); smaller budgets use prefixes of that
    ranking, which for greedy selectors equals re-running them.

    Args:
        inputs: Model, candidates and selector configuration
        selectors: Selector names
        budgets: Budget fractions (or counts) for the FDR table
        test_set: With retrain_config, enables the retraining experiment
        retrain_config: Schedule for the retraining experiment

    Returns:
        EvalReport
    """
    n = len(inputs.candidates)
    largest = max([resolve_budget(b, n) for b in budgets] + [resolve_budget(FTCR_BUDGETS[-1], n)])
    report = EvalReport(budgets=list(budgets), selectors=list(selectors))
    report.config = {
        'selection': inputs.selection.to_dict(),
        'baseline': inputs.baseline.to_dict(),
        'candidate_count': n,
    }
    retrain = test_set is not None and retrain_config is not None
    if retrain:
        report.config['retrain'] = retrain_config.to_dict()

    for name in selectors:
        logger.info(f"Evaluating {name} on {n} candidates")
        selection = run_selector(name, inputs, largest)
        report.timings[name] = selection.timings
        report.fdr[name] = {b: report_fdr(selection, resolve_budget(b, n)) for b in budgets}
        report.ftcr[name] = ftcr_curve(selection.order, selection.labels, selection.predictions)

        if retrain:
            if inputs.train_set is None:
                raise ValueError("retraining needs a training set")
            report.retrain[name] = {}
            for b in budgets:
                chosen = np.asarray(selection.order[:resolve_budget(b, n)], dtype=np.int64)
                result = retrain_experiment(
                    inputs.model, inputs.train_set, test_set,
                    inputs.candidates.mutated[chosen], inputs.candidates.labels[chosen],
                    retrain_config, inputs.workers,
                )
                report.baseline_accuracy = result.before
                report.retrain[name][b] = result.delta
    return report
