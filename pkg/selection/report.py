"""
Selection report shared by NSS and the baseline selectors
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


@dataclass
class SelectionReport:
    """
    Outcome of one selector run

    order is the full prioritized ranking of candidate indices and selected
    its first `budget` entries. scores holds one value per candidate in
    candidate-index order (None for selectors without a score). labels and
    predictions are cached so fault metrics can be recomputed from the
    report file alone.
    """

    selector: str
    order: List[int]
    budget: int
    candidate_count: int
    scores: Optional[List[float]] = None
    sensitive: List[Dict] = field(default_factory=list)
    coverage: Optional[float] = None
    labels: Optional[List[int]] = None
    predictions: Optional[List[int]] = None
    config: Dict = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.order = [int(i) for i in self.order]
        if not 0 <= self.budget <= self.candidate_count:
            raise ValueError(f"budget {self.budget} outside [0, {self.candidate_count}]")
        if len(self.order) != self.candidate_count:
            raise ValueError(f"ranking covers {len(self.order)} of {self.candidate_count} candidates")

    @property
    def selected(self) -> List[int]:
        return self.order[:self.budget]

    def score_of(self, index: int) -> Optional[float]:
        return None if self.scores is None else self.scores[index]

    def attach_outcomes(self, labels: np.ndarray, predictions: np.ndarray) -> 'SelectionReport':
        self.labels = [int(v) for v in labels]
        self.predictions = [int(v) for v in predictions]
        return self

    def to_dict(self) -> Dict:
        """JSON form with a fixed field order; timings are kept out (see timings_dict)"""
        def encode(value: float):
            # JSON has no infinity literal
            return 'inf' if math.isinf(value) else value

        return {
            'selector': self.selector,
            'candidate_count': self.candidate_count,
            'budget': self.budget,
            'selected': self.selected,
            'order': self.order,
            'scores': None if self.scores is None else [encode(float(s)) for s in self.scores],
            'sensitive': self.sensitive,
            'coverage': self.coverage,
            'labels': self.labels,
            'predictions': self.predictions,
            'config': self.config,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SelectionReport':
        scores = data.get('scores')
        if scores is not None:
            scores = [math.inf if s == 'inf' else float(s) for s in scores]
        return cls(
            selector=data['selector'],
            order=data['order'],
            budget=int(data['budget']),
            candidate_count=int(data['candidate_count']),
            scores=scores,
            sensitive=data.get('sensitive', []),
            coverage=data.get('coverage'),
            labels=data.get('labels'),
            predictions=data.get('predictions'),
            config=data.get('config', {}),
        )


def rank_descending(scores: np.ndarray) -> np.ndarray:
    """
    Indices by descending score, equal scores in ascending index order

    A stable O(n log n) sort of the negated scores; +inf ranks first.
    """
    scores = np.asarray(scores, dtype=np.float64)
    return np.argsort(-scores, kind='stable')


def resolve_budget(budget, count: int) -> int:
    """
    Turn a budget into a candidate count

    Floats in (0, 1] are fractions of count, rounded down with a minimum of
    one; integers are absolute counts.

    Raises:
        ValueError: for a non-positive budget or one larger than count
    """
    if count < 1:
        raise ValueError("no candidates to select from")
    if isinstance(budget, (bool, np.bool_)):
        raise ValueError(f"invalid budget {budget!r}")
    if isinstance(budget, (int, np.integer)):
        value = int(budget)
        if value < 1:
            raise ValueError(f"budget must be positive, got {value}")
        if value > count:
            raise ValueError(f"budget {value} exceeds the {count} available candidates")
        return value

    fraction = float(budget)
    if not 0 < fraction <= 1:
        raise ValueError(f"fractional budget must lie in (0, 1], got {fraction}")
    # round first so 0.05 * 100 does not floor to 4
    return max(1, math.floor(round(fraction * count, 9)))


def parse_budget(text: str):
    """'0.05' -> 0.05 (fraction), '5%' -> 0.05, '50' -> 50 (count)"""
    text = text.strip()
    if text.endswith('%'):
        return float(text[:-1]) / 100.0
    if any(ch in text for ch in '.eE'):
        return float(text)
    return int(text)
