"""
Test selectors: neuron-sensitivity selection and the comparison baselines
"""

from .report import SelectionReport, resolve_budget
from .nss import (NeuronAddress, SelectionConfig, SelectionError, SensitivityVector, identify_sensitive,
                  neuron_sensitivity, select, tnss_score)
from .baselines import (BaselineConfig, CoverageProfile, dsa_prioritize, gini_prioritize, kmnc_profile,
                        kmnc_select, nac_select, random_select)
from .runner import SELECTOR_NAMES, SelectorInputs, run_selector

__all__ = [
    'SelectionReport', 'resolve_budget',
    'NeuronAddress', 'SelectionConfig', 'SelectionError', 'SensitivityVector',
    'identify_sensitive', 'neuron_sensitivity', 'select', 'tnss_score',
    'BaselineConfig', 'CoverageProfile', 'dsa_prioritize', 'gini_prioritize',
    'kmnc_profile', 'kmnc_select', 'nac_select', 'random_select',
    'SELECTOR_NAMES', 'SelectorInputs', 'run_selector',
]
