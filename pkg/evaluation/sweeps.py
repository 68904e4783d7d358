"""
Parameter sweeps: sensitive-neuron ratio, tap layer and mutation strength
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from evaluation.metrics import report_fdr
from loaders.bundle_store import ModelBundle
from loaders.idx_loader import LabeledDataset
from mutation.candidates import CandidateSet, generate_candidates
from mutation.transforms import MutationSpec
from network.layers import encoder_layers
from selection.nss import (SelectionConfig, accumulate_sensitivity, pair_differences, resolve_layer, select,
                           top_count)

logger = logging.getLogger(__name__)

SWEEP_KS = (0.01, 0.05, 0.10, 0.20, 1.0)
SWEEP_BUDGET = 0.20
LAYER_SWEEP_K = 0.20


def sweep_k(model: ModelBundle, candidates: CandidateSet, ks: Sequence[float] = SWEEP_KS,
            budget=SWEEP_BUDGET, layer: Optional[int] = None, workers: Optional[int] = None) -> List[Dict]:
    """FDR of NSS for each sensitive-neuron ratio k at a fixed budget"""
    rows = []
    for k in ks:
        report = select(model, candidates, SelectionConfig(k=k, budget=budget, layer=layer), workers)
        rows.append({'k': k, 'sensitive': len(report.sensitive), 'fdr': report_fdr(report)})
        logger.info(f"k={k}: FDR {rows[-1]['fdr']:.4f}")
    return rows


def sweep_layers(model: ModelBundle, candidates: CandidateSet, layers: Optional[Sequence[int]] = None,
                 k: float = LAYER_SWEEP_K, budget=SWEEP_BUDGET, workers: Optional[int] = None) -> List[Dict]:
    """
    FDR of NSS with sensitive neurons drawn from each tap layer

    Defaults to every activation or pooling output before the head plus the
    last encoder layer.
    """
    layers = list(layers) if layers is not None else encoder_layers(model.layers)
    rows = []
    for layer in layers:
        report = select(model, candidates, SelectionConfig(k=k, budget=budget, layer=layer), workers)
        rows.append({'layer': layer, 'kind': model.layers[layer].kind, 'k': k, 'fdr': report_fdr(report)})
        logger.info(f"layer {layer} ({model.layers[layer].kind}): FDR {rows[-1]['fdr']:.4f}")
    return rows


def sensitivity_study(model: ModelBundle, candidates: CandidateSet, k: float = 0.10,
                      layer: Optional[int] = None, seed: int = 0, workers: Optional[int] = None) -> Dict:
    """
    Mean per-pair sensitivity of the top-k neurons against a random k-fraction

    Returns:
        {'layer', 'neurons', 'top_mean', 'random_mean'}
    """
    layer = resolve_layer(model, layer)
    diffs, _ = pair_differences(model, candidates, layer, workers)
    profile = accumulate_sensitivity(diffs, layer, workers)
    mean = profile.values / len(candidates)

    top = profile.top(k)
    count = top_count(k, len(profile))
    others = np.sort(np.random.default_rng(seed).choice(len(profile), size=count, replace=False))
    return {
        'layer': layer,
        'neurons': count,
        'top_mean': float(mean[top].mean()),
        'random_mean': float(mean[others].mean()),
    }


def strength_sweep(model: ModelBundle, dataset: LabeledDataset, kind: str, values: Sequence[float],
                   k: float = 0.10, layer: Optional[int] = None, seed: int = 0,
                   workers: Optional[int] = None) -> List[Dict]:
    """Sensitivity study repeated over increasing fixed mutation strengths"""
    rows = []
    for value in values:
        params = (value, value) if kind == 'shift' else (value,)
        fixed = MutationSpec(kind, params)
        candidates = generate_candidates(dataset, seed, fixed=fixed, workers=workers)
        study = sensitivity_study(model, candidates, k, layer, seed, workers)
        rows.append({'kind': kind, 'value': value, **study})
    return rows
