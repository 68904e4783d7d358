"""
Comparison selectors: random, Gini impurity, NAC-greedy, KMNC-greedy and
distance-based surprise adequacy

Every selector except NSS sees one image per candidate, the mutated x'.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from loaders.bundle_store import ModelBundle, load_profile_sidecar, save_profile_sidecar
from loaders.idx_loader import LabeledDataset
from mutation.candidates import CandidateSet
from selection.nss import SelectionError, resolve_layer
from selection.report import SelectionReport, rank_descending, resolve_budget
from utils.parallel import DEFAULT_CHUNK, chunk_ranges, parallel_map
from utils.timing import PhaseTimer

logger = logging.getLogger(__name__)


@dataclass
class BaselineConfig:
    nac_threshold: float = 0.5
    kmnc_bins: int = 1000
    dsa_train_cap: int = 1000
    seed: int = 0

    def validate(self, class_count: Optional[int] = None) -> None:
        if not 0 <= self.nac_threshold < 1:
            raise SelectionError(f"nac_threshold must lie in [0, 1), got {self.nac_threshold}")
        if self.kmnc_bins < 1:
            raise SelectionError(f"kmnc_bins must be >= 1, got {self.kmnc_bins}")
        if self.dsa_train_cap < 1 or (class_count is not None and self.dsa_train_cap < class_count):
            raise SelectionError(f"dsa_train_cap must be at least the class count, got {self.dsa_train_cap}")

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class CoverageProfile:
    """Training-set output range of every neuron of one tap layer"""

    layer: int
    low: np.ndarray
    high: np.ndarray
    k_bins: int

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=np.float32)
        self.high = np.asarray(self.high, dtype=np.float32)
        if self.low.shape != self.high.shape or self.low.ndim != 1:
            raise SelectionError("coverage profile bounds must be matching 1-D arrays")
        if np.any(self.low > self.high):
            raise SelectionError("coverage profile has low > high for some neuron")
        if self.k_bins < 1:
            raise SelectionError(f"k_bins must be >= 1, got {self.k_bins}")

    @property
    def coverable_bins(self) -> int:
        """Constant neurons (low == high) contribute one bin, the rest k_bins each"""
        constant = int(np.sum(self.low == self.high))
        return constant + (len(self.low) - constant) * self.k_bins

    def bin_indices(self, activations: np.ndarray) -> np.ndarray:
        """
        Bin hit by each neuron output, -1 where the output falls outside [low, high]

        Args:
            activations: [n, neurons]

        Returns:
            int64 [n, neurons]
        """
        a = np.asarray(activations, dtype=np.float64)
        low = self.low.astype(np.float64)
        high = self.high.astype(np.float64)
        span = high - low
        inside = (a >= low) & (a <= high)

        with np.errstate(divide='ignore', invalid='ignore'):
            raw = np.floor((a - low) / np.where(span > 0, span, 1.0) * self.k_bins)
        bins = np.minimum(raw, self.k_bins - 1).astype(np.int64)
        bins = np.where(span > 0, bins, 0)
        return np.where(inside, bins, -1)

    def save(self, directory: str) -> str:
        return save_profile_sidecar(directory, self.layer, self.low, self.high, self.k_bins)

    @classmethod
    def load(cls, directory: str) -> 'CoverageProfile':
        layer, low, high, k_bins = load_profile_sidecar(directory)
        return cls(layer, low, high, k_bins)


def _report(selector: str, order: np.ndarray, budget: int, candidates: CandidateSet,
            scores: Optional[np.ndarray], predictions: Optional[np.ndarray], config: Dict,
            timer: PhaseTimer, coverage: Optional[float] = None) -> SelectionReport:
    report = SelectionReport(
        selector=selector,
        order=[int(i) for i in order],
        budget=budget,
        candidate_count=len(candidates),
        scores=None if scores is None else [float(s) for s in scores],
        coverage=coverage,
        config=config,
        timings=timer.as_dict(),
    )
    if predictions is not None:
        report.attach_outcomes(candidates.labels, predictions)
    return report


def random_select(candidates: CandidateSet, budget, seed: int = 0, model: Optional[ModelBundle] = None,
                  workers: Optional[int] = None) -> SelectionReport:
    """
    Uniform sample without replacement

    The ranking is a seeded permutation; its first `budget` entries are the
    selection. With a model, predictions are cached in the report.
    """
    count = resolve_budget(budget, len(candidates))
    timer = PhaseTimer()
    with timer.phase('ordering'):
        order = np.random.default_rng(seed).permutation(len(candidates))
    predictions = model.predict(candidates.mutated, workers) if model is not None else None
    return _report('random', order, count, candidates, None, predictions, {'seed': seed}, timer)


def gini_impurity(probabilities: np.ndarray) -> np.ndarray:
    """1 - sum_c p_c^2 per row"""
    p = np.asarray(probabilities, dtype=np.float64)
    return 1.0 - np.sum(p * p, axis=1)


def gini_prioritize(model: ModelBundle, candidates: CandidateSet, budget,
                    workers: Optional[int] = None) -> SelectionReport:
    """Rank candidates by descending Gini impurity of the model's class probabilities"""
    count = resolve_budget(budget, len(candidates))
    timer = PhaseTimer()
    with timer.phase('scoring'):
        probabilities = model.probabilities(candidates.mutated, workers)
        scores = gini_impurity(probabilities)
    with timer.phase('ordering'):
        order = rank_descending(scores)
    predictions = np.argmax(probabilities, axis=1)
    return _report('gini', order, count, candidates, scores, predictions, {}, timer)


def greedy_order(gain: Callable[[np.ndarray], np.ndarray], mark: Callable[[int], None],
                 n: int, budget: int) -> Tuple[np.ndarray, List[int]]:
    """
    Greedy max-gain picking

    Args:
        gain: Maps candidate indices to the number of new items each would cover
        mark: Records one picked candidate as covered
        n: Candidate count
        budget: Picks to make greedily

    Returns:
        (full ranking: greedy picks, then every remaining candidate in
        ascending index order; gain of each greedy pick)

    Once no candidate adds coverage, the remaining picks go by ascending index.
    """
    remaining = np.ones(n, dtype=bool)
    picks, gains = [], []
    while len(picks) < budget:
        pool = np.flatnonzero(remaining)
        pool_gain = gain(pool)
        best = int(np.argmax(pool_gain))
        if pool_gain[best] <= 0:
            break
        choice = int(pool[best])
        picks.append(choice)
        gains.append(int(pool_gain[best]))
        remaining[choice] = False
        mark(choice)
    order = np.concatenate([np.asarray(picks, dtype=np.int64), np.flatnonzero(remaining)])
    return order, gains


def nac_activations(activations: np.ndarray, threshold: float) -> np.ndarray:
    """
    Neurons activated per input: per-input min-max scaled output above threshold

    Inputs whose outputs are all equal activate nothing.
    """
    a = np.asarray(activations, dtype=np.float64)
    low = a.min(axis=1, keepdims=True)
    span = a.max(axis=1, keepdims=True) - low
    with np.errstate(divide='ignore', invalid='ignore'):
        scaled = np.where(span > 0, (a - low) / np.where(span > 0, span, 1.0), 0.0)
    return scaled > threshold


def nac_select(model: ModelBundle, candidates: CandidateSet, threshold: float, budget,
               layer: Optional[int] = None, workers: Optional[int] = None) -> SelectionReport:
    """Greedy selection maximizing newly activated neurons"""
    if not 0 <= threshold < 1:
        raise SelectionError(f"NAC threshold must lie in [0, 1), got {threshold}")
    count = resolve_budget(budget, len(candidates))
    layer = resolve_layer(model, layer)
    timer = PhaseTimer()

    with timer.phase('scoring'):
        outputs, trace = model.forward(candidates.mutated, taps=(layer,), workers=workers)
        active = nac_activations(trace.neurons(layer), threshold)

    covered = np.zeros(active.shape[1], dtype=bool)

    def mark(choice: int) -> None:
        covered[:] |= active[choice]

    with timer.phase('ordering'):
        order, _ = greedy_order(lambda pool: (active[pool] & ~covered).sum(axis=1), mark, len(candidates), count)

    coverage = float(covered.mean()) if covered.size else 0.0
    logger.info(f"NAC greedy reached coverage {coverage:.4f} with {count} picks")
    config = {'threshold': threshold, 'layer': layer}
    return _report('nac', order, count, candidates, None, np.argmax(outputs, axis=1), config, timer, coverage)


def kmnc_profile(model: ModelBundle, train_set: LabeledDataset, k_bins: int, layer: Optional[int] = None,
                 workers: Optional[int] = None) -> CoverageProfile:
    """Per-neuron output range over the training data"""
    if len(train_set) == 0:
        raise SelectionError("cannot build a coverage profile from an empty training set")
    layer = resolve_layer(model, layer)
    logger.info(f"Building KMNC profile over {len(train_set)} training images at layer {layer}")

    def bounds(r):
        a = model.activations(train_set.images[r[0]:r[1]], layer, workers=1)
        return a.min(axis=0), a.max(axis=0)

    parts = parallel_map(bounds, chunk_ranges(len(train_set), DEFAULT_CHUNK), workers)
    low = np.min(np.stack([p[0] for p in parts]), axis=0)
    high = np.max(np.stack([p[1] for p in parts]), axis=0)
    return CoverageProfile(layer, low, high, k_bins)


def kmnc_greedy(bins: np.ndarray, k_bins: int, budget: int) -> Tuple[np.ndarray, int]:
    """
    Greedy KMNC ordering over precomputed bin indices

    Args:
        bins: [candidates, neurons] bin per neuron output, -1 for none
        k_bins: Bins per neuron
        budget: Greedy picks

    Returns:
        (ranking, number of (neuron, bin) cells covered by the greedy picks)
    """
    neurons = bins.shape[1]
    covered = np.zeros((neurons, k_bins), dtype=bool)
    columns = np.arange(neurons)
    hit = bins >= 0
    safe = np.where(hit, bins, 0)

    def gain(pool: np.ndarray) -> np.ndarray:
        return (hit[pool] & ~covered[columns, safe[pool]]).sum(axis=1)

    def mark(choice: int) -> None:
        rows = hit[choice]
        covered[columns[rows], bins[choice, rows]] = True

    order, _ = greedy_order(gain, mark, bins.shape[0], budget)
    return order, int(covered.sum())


def kmnc_select(model: ModelBundle, candidates: CandidateSet, profile: CoverageProfile, budget,
                workers: Optional[int] = None) -> SelectionReport:
    """Greedy selection maximizing newly covered (neuron, bin) cells"""
    count = resolve_budget(budget, len(candidates))
    timer = PhaseTimer()

    with timer.phase('scoring'):
        outputs, trace = model.forward(candidates.mutated, taps=(profile.layer,), workers=workers)
        activations = trace.neurons(profile.layer)
        if activations.shape[1] != len(profile.low):
            raise SelectionError(
                f"profile covers {len(profile.low)} neurons, layer {profile.layer} has {activations.shape[1]}"
            )
        bins = profile.bin_indices(activations)

    with timer.phase('ordering'):
        order, covered = kmnc_greedy(bins, profile.k_bins, count)

    coverage = float(covered / profile.coverable_bins)
    logger.info(f"KMNC greedy reached coverage {coverage:.4f} with {count} picks")
    config = {'k_bins': profile.k_bins, 'layer': profile.layer}
    return _report('kmnc', order, count, candidates, None, np.argmax(outputs, axis=1), config, timer, coverage)


def cache_training_activations(activations: np.ndarray, labels: np.ndarray, class_count: int,
                               cap: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Keep at most cap // class_count training activations per class

    The per-class subsample is uniform and seeded; kept rows stay in
    ascending dataset order.
    """
    per_class = max(1, cap // class_count)
    rng = np.random.default_rng(seed)
    keep = []
    for c in range(class_count):
        rows = np.flatnonzero(labels == c)
        if len(rows) > per_class:
            rows = np.sort(rng.choice(rows, size=per_class, replace=False))
        keep.append(rows)
    keep = np.concatenate(keep)
    return activations[keep], labels[keep]


def dsa_scores(activations: np.ndarray, predictions: np.ndarray, train_activations: np.ndarray,
               train_labels: np.ndarray) -> np.ndarray:
    """
    Distance-based surprise adequacy per candidate

    dist_a is the distance from the candidate to its nearest training
    activation of the predicted class, x_a that training activation, and
    dist_b the distance from x_a to the nearest training activation of any
    other class. The score is dist_a / dist_b, +inf when dist_b is 0 or the
    predicted class has no training activation.
    """
    a = np.asarray(activations, dtype=np.float64)
    train = np.asarray(train_activations, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    scores = np.full(a.shape[0], np.inf)

    # nearest other-class distance of every cached training activation
    pairwise = cdist(train, train)
    pairwise[train_labels[:, None] == train_labels[None, :]] = np.inf
    nearest_other = pairwise.min(axis=1) if len(train) else np.zeros(0)

    for c in np.unique(predictions):
        rows = np.flatnonzero(predictions == c)
        same = np.flatnonzero(train_labels == c)
        if len(same) == 0:
            continue
        dists = cdist(a[rows], train[same])
        nearest = np.argmin(dists, axis=1)
        dist_a = dists[np.arange(len(rows)), nearest]
        dist_b = nearest_other[same[nearest]]
        with np.errstate(divide='ignore', invalid='ignore'):
            scores[rows] = np.where(dist_b > 0, dist_a / np.where(dist_b > 0, dist_b, 1.0), np.inf)
    return scores


def dsa_prioritize(model: ModelBundle, train_set: LabeledDataset, candidates: CandidateSet, cap: int, budget,
                   layer: Optional[int] = None, seed: int = 0, workers: Optional[int] = None) -> SelectionReport:
    """Rank candidates by descending surprise adequacy"""
    if len(train_set) == 0:
        raise SelectionError("DSA needs a non-empty training set")
    if cap < 1:
        raise SelectionError(f"dsa cap must be positive, got {cap}")
    count = resolve_budget(budget, len(candidates))
    layer = resolve_layer(model, layer)
    timer = PhaseTimer()

    with timer.phase('scoring'):
        train_acts = model.activations(train_set.images, layer, workers)
        train_acts, train_labels = cache_training_activations(
            train_acts, train_set.labels, train_set.class_count, cap, seed
        )
        outputs, trace = model.forward(candidates.mutated, taps=(layer,), workers=workers)
        predictions = np.argmax(outputs, axis=1)
        scores = dsa_scores(trace.neurons(layer), predictions, train_acts, train_labels)
    with timer.phase('ordering'):
        order = rank_descending(scores)

    config = {'cap': cap, 'layer': layer, 'seed': seed, 'cached': int(len(train_labels))}
    return _report('dsa', order, count, candidates, scores, predictions, config, timer)
