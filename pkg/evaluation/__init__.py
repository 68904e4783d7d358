"""
Evaluation harness: fault metrics, overhead benchmark, sweeps and retraining
"""

from .metrics import FTCR_BUDGETS, EvalReport, FtcrCurve, fault_types, fdr, ftcr_curve, report_fdr
from .bench import measure_greedy_scaling, measure_ordering_scaling, overhead_bench
from .sweeps import sensitivity_study, strength_sweep, sweep_k, sweep_layers
from .retrain import RetrainResult, retrain_experiment
from .harness import evaluate_selectors

__all__ = [
    'FTCR_BUDGETS', 'EvalReport', 'FtcrCurve', 'fault_types', 'fdr', 'ftcr_curve', 'report_fdr',
    'measure_greedy_scaling', 'measure_ordering_scaling', 'overhead_bench',
    'sensitivity_study', 'strength_sweep', 'sweep_k', 'sweep_layers',
    'RetrainResult', 'retrain_experiment',
    'evaluate_selectors',
]
