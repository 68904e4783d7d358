"""
Dispatch a selector by name with a shared set of inputs
"""

import logging
from dataclasses import dataclass
from typing import Optional

from loaders.bundle_store import ModelBundle
from loaders.idx_loader import LabeledDataset
from mutation.candidates import CandidateSet
from selection.baselines import (BaselineConfig, CoverageProfile, dsa_prioritize, gini_prioritize, kmnc_profile,
                                 kmnc_select, nac_select, random_select)
from selection.nss import SelectionConfig, SelectionError, resolve_layer, select
from selection.report import SelectionReport

logger = logging.getLogger(__name__)

SELECTOR_NAMES = ('nss', 'random', 'gini', 'nac', 'kmnc', 'dsa')
NEEDS_TRAIN_SET = ('kmnc', 'dsa')


@dataclass
class SelectorInputs:
    """Everything any selector may need; train_set and profile are optional"""

    model: ModelBundle
    candidates: CandidateSet
    selection: SelectionConfig
    baseline: BaselineConfig
    train_set: Optional[LabeledDataset] = None
    profile: Optional[CoverageProfile] = None
    workers: Optional[int] = None

    def coverage_profile(self) -> CoverageProfile:
        """Cached profile for the tap layer, built from the training set on first use"""
        layer = resolve_layer(self.model, self.selection.layer)
        if self.profile is None or self.profile.layer != layer or self.profile.k_bins != self.baseline.kmnc_bins:
            if self.train_set is None:
                raise SelectionError("kmnc needs a training set or a stored coverage profile")
            self.profile = kmnc_profile(self.model, self.train_set, self.baseline.kmnc_bins, layer, self.workers)
        return self.profile


def run_selector(name: str, inputs: SelectorInputs, budget=None) -> SelectionReport:
    """
    Run one selector

    Args:
        name: One of SELECTOR_NAMES
        inputs: Model, candidates and configuration
        budget: Override of inputs.selection.budget

    Raises:
        SelectionError: for an unknown selector or a missing training set
    """
    if name not in SELECTOR_NAMES:
        raise SelectionError(f"Unknown selector: {name!r} (expected one of {', '.join(SELECTOR_NAMES)})")
    if name == 'dsa' and inputs.train_set is None:
        raise SelectionError("dsa needs a training set")

    budget = inputs.selection.budget if budget is None else budget
    cfg, base = inputs.selection, inputs.baseline
    model, candidates, workers = inputs.model, inputs.candidates, inputs.workers
    base.validate(model.class_count if name == 'dsa' else None)

    if name == 'nss':
        run_cfg = SelectionConfig(cfg.k, budget, cfg.layer, cfg.seed, cfg.identify_fraction)
        return select(model, candidates, run_cfg, workers)
    if name == 'random':
        return random_select(candidates, budget, base.seed, model, workers)
    if name == 'gini':
        return gini_prioritize(model, candidates, budget, workers)
    if name == 'nac':
        return nac_select(model, candidates, base.nac_threshold, budget, cfg.layer, workers)
    if name == 'kmnc':
        return kmnc_select(model, candidates, inputs.coverage_profile(), budget, workers)
    return dsa_prioritize(model, inputs.train_set, candidates, base.dsa_train_cap, budget,
                          cfg.layer, base.seed, workers)
