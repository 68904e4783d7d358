"""
Neuron-sensitivity guided test selection

Sensitivity of neuron i on a pair (x, x') is |N_i(x) - N_i(x')|. The
identifier accumulates it over all pairs and keeps the top k fraction of
neurons; each candidate is then scored by its summed sensitivity over those
neurons and the candidates are ranked by descending score.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from loaders.bundle_store import ModelBundle
from mutation.candidates import CandidatePair, CandidateSet
from network.engine import ActivationTrace
from selection.report import SelectionReport, rank_descending, resolve_budget
from utils.parallel import DEFAULT_CHUNK, chunk_ranges, parallel_map, tree_reduce
from utils.timing import PhaseTimer

logger = logging.getLogger(__name__)


class SelectionError(ValueError):
    """Raised for invalid selection inputs (empty sets, bad k, unknown neurons)"""


@dataclass(frozen=True)
class NeuronAddress:
    """A neuron: tap layer index plus flat index within that layer's output"""

    layer: int
    index: int

    def to_dict(self) -> Dict:
        return {'layer': self.layer, 'index': self.index}


@dataclass
class SensitivityVector:
    """Per-neuron sensitivity of one tap layer (single pair or accumulated)"""

    layer: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise SelectionError(f"sensitivity vector must be 1-D, got shape {list(self.values.shape)}")
        if np.any(self.values < 0):
            raise SelectionError("sensitivity values must be non-negative")

    def __len__(self) -> int:
        return self.values.shape[0]

    def top(self, k: float) -> np.ndarray:
        """Flat indices of the ceil(k*n) most sensitive neurons, descending, ties by ascending index"""
        count = top_count(k, len(self))
        return rank_descending(self.values)[:count]


@dataclass
class SelectionConfig:
    """
    k: fraction of neurons kept as sensitive, in (0, 1]
    budget: candidates to select (fraction of the set or absolute count)
    layer: tap layer index, None for the last encoder layer
    identify_fraction: share of candidates used to identify sensitive neurons
    """

    k: float = 0.10
    budget: Union[int, float] = 0.10
    layer: Optional[int] = None
    seed: int = 0
    identify_fraction: float = 1.0

    def validate(self) -> None:
        if not 0 < self.k <= 1:
            raise SelectionError(f"k must lie in (0, 1], got {self.k}")
        if not 0 < self.identify_fraction <= 1:
            raise SelectionError(f"identify_fraction must lie in (0, 1], got {self.identify_fraction}")

    def to_dict(self) -> Dict:
        return asdict(self)


def top_count(k: float, n: int) -> int:
    if not 0 < k <= 1:
        raise SelectionError(f"k must lie in (0, 1], got {k}")
    # round first so 0.1 * 30 does not ceil to 4
    return min(n, max(1, math.ceil(round(k * n, 9))))


def neuron_sensitivity(trace_x: ActivationTrace, trace_xp: ActivationTrace, layer: int,
                       item: int = 0) -> SensitivityVector:
    """
    Single-pair sensitivity |N_i(x) - N_i(x')| of every neuron in a layer

    Args:
        trace_x: Trace of the original input
        trace_xp: Trace of the mutated input
        layer: Tap layer index
        item: Batch position of the pair inside the traces
    """
    if layer not in trace_x or layer not in trace_xp:
        raise SelectionError(f"layer {layer} is missing from a trace")
    a, b = trace_x.neurons(layer), trace_xp.neurons(layer)
    if a.shape != b.shape:
        raise SelectionError(f"trace shapes differ at layer {layer}: {list(a.shape)} vs {list(b.shape)}")
    diff = np.abs(a[item].astype(np.float64) - b[item].astype(np.float64))
    return SensitivityVector(layer, diff)


def resolve_layer(model: ModelBundle, layer: Optional[int]) -> int:
    if layer is None:
        return model.default_tap()
    if not 0 <= layer < len(model.layers):
        raise SelectionError(f"tap layer {layer} outside model with {len(model.layers)} layers")
    return int(layer)


def pair_differences(model: ModelBundle, candidates: CandidateSet, layer: int,
                     workers: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sensitivity matrix of a candidate set

    Returns:
        (|a(x') - a(x)| as float64 [candidates, neurons], predicted class of every x')
    """
    if len(candidates) == 0:
        raise SelectionError("candidate set is empty")
    _, trace_x = model.forward(candidates.originals, taps=(layer,), workers=workers)
    outputs, trace_xp = model.forward(candidates.mutated, taps=(layer,), workers=workers)
    diffs = np.abs(trace_xp.neurons(layer).astype(np.float64) - trace_x.neurons(layer).astype(np.float64))
    predictions = np.argmax(outputs, axis=1).astype(np.int64)
    return diffs, predictions


def accumulate_sensitivity(diffs: np.ndarray, layer: int, workers: Optional[int] = None) -> SensitivityVector:
    """Sum per-pair sensitivities over fixed chunks, merged with a pairwise tree"""
    if diffs.shape[0] == 0:
        raise SelectionError("cannot accumulate sensitivity over zero pairs")
    partials = parallel_map(lambda r: diffs[r[0]:r[1]].sum(axis=0),
                            chunk_ranges(diffs.shape[0], DEFAULT_CHUNK), workers)
    return SensitivityVector(layer, tree_reduce(partials, np.add))


def _identification_rows(n: int, fraction: float, seed: int) -> np.ndarray:
    if fraction >= 1:
        return np.arange(n)
    count = max(1, math.floor(round(fraction * n, 9)))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=count, replace=False))


def sensitivity_profile(model: ModelBundle, candidates: CandidateSet, layer: Optional[int] = None,
                        workers: Optional[int] = None) -> SensitivityVector:
    """Accumulated sensitivity of every neuron of the tap layer over all pairs"""
    layer = resolve_layer(model, layer)
    diffs, _ = pair_differences(model, candidates, layer, workers)
    return accumulate_sensitivity(diffs, layer, workers)


def identify_sensitive(model: ModelBundle, candidates: CandidateSet, k: float,
                       layer: Optional[int] = None, workers: Optional[int] = None) -> List[NeuronAddress]:
    """
    Sensitive neuron identifier

    Args:
        model: Classifier
        candidates: (x, x') pairs used for identification
        k: Fraction of neurons to keep, in (0, 1]
        layer: Tap layer (None = last encoder layer)
        workers: Thread cap

    Returns:
        The ceil(k*n) neurons with the largest accumulated sensitivity,
        descending, ties by ascending flat index
    """
    if len(candidates) == 0:
        raise SelectionError("cannot identify sensitive neurons from an empty pair list")
    if not 0 < k <= 1:
        raise SelectionError(f"k must lie in (0, 1], got {k}")
    profile = sensitivity_profile(model, candidates, layer, workers)
    return [NeuronAddress(profile.layer, int(i)) for i in profile.top(k)]


def _sensitive_indices(sensitive: Sequence[NeuronAddress], layer: int, neurons: int) -> np.ndarray:
    if not sensitive:
        raise SelectionError("sensitive neuron set is empty")
    indices = []
    for address in sensitive:
        if address.layer != layer or not 0 <= address.index < neurons:
            raise SelectionError(f"neuron {address} is outside tap layer {layer} with {neurons} neurons")
        indices.append(address.index)
    return np.asarray(indices, dtype=np.int64)


def tnss_score(model: ModelBundle, pair: CandidatePair, sensitive: Sequence[NeuronAddress]) -> float:
    """Summed sensitivity of one pair over the sensitive neurons"""
    if not sensitive:
        raise SelectionError("sensitive neuron set is empty")
    layer = sensitive[0].layer
    batch_x = np.asarray(pair.original)[None]
    batch_xp = np.asarray(pair.mutated)[None]
    _, trace_x = model.forward(batch_x, taps=(layer,), workers=1)
    _, trace_xp = model.forward(batch_xp, taps=(layer,), workers=1)
    vector = neuron_sensitivity(trace_x, trace_xp, layer)
    return float(vector.values[_sensitive_indices(sensitive, layer, len(vector))].sum())


def score_pairs(diffs: np.ndarray, sensitive_idx: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
    """Score every pair: row sums of the sensitivity matrix over the sensitive columns"""
    parts = parallel_map(lambda r: diffs[r[0]:r[1]][:, sensitive_idx].sum(axis=1),
                         chunk_ranges(diffs.shape[0], DEFAULT_CHUNK), workers)
    return np.concatenate(parts)


def select(model: ModelBundle, candidates: CandidateSet, config: SelectionConfig,
           workers: Optional[int] = None) -> SelectionReport:
    """
    Rank candidates by neuron-sensitivity score and keep the budget

    Args:
        model: Classifier under test
        candidates: (x, x') pairs
        config: k, budget, tap layer, identification subset
        workers: Thread cap

    Returns:
        SelectionReport with the full ranking, every score, the sensitive
        neurons and per-phase timings
    """
    config.validate()
    if len(candidates) == 0:
        raise SelectionError("candidate set is empty")
    budget = resolve_budget(config.budget, len(candidates))
    layer = resolve_layer(model, config.layer)
    timer = PhaseTimer()

    logger.info(f"NSS selection over {len(candidates)} candidates at layer {layer} (k={config.k}, budget={budget})")
    with timer.phase('activations'):
        diffs, predictions = pair_differences(model, candidates, layer, workers)

    with timer.phase('identify'):
        rows = _identification_rows(len(candidates), config.identify_fraction, config.seed)
        nslist = accumulate_sensitivity(diffs[rows], layer, workers)
        sensitive_idx = nslist.top(config.k)
    logger.info(f"Identified {len(sensitive_idx)} of {len(nslist)} neurons as sensitive")

    with timer.phase('scoring'):
        scores = score_pairs(diffs, sensitive_idx, workers)

    with timer.phase('ordering'):
        order = rank_descending(scores)

    sensitive = [
        {'layer': layer, 'index': int(i), 'sensitivity': float(nslist.values[i])}
        for i in sensitive_idx
    ]
    report = SelectionReport(
        selector='nss',
        order=order.tolist(),
        budget=budget,
        candidate_count=len(candidates),
        scores=[float(s) for s in scores],
        sensitive=sensitive,
        config={**config.to_dict(), 'layer': layer},
        timings=timer.as_dict(),
    )
    return report.attach_outcomes(candidates.labels, predictions)
