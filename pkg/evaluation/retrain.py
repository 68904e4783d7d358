"""
Retraining experiment: fine-tune on the training set plus selected cases
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from loaders.bundle_store import ModelBundle
from loaders.idx_loader import LabeledDataset
from network.trainer import TrainConfig, retrain_config, train

logger = logging.getLogger(__name__)


@dataclass
class RetrainResult:
    before: float
    after: float
    added: int
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def delta(self) -> float:
        return self.after - self.before


def holdout_accuracy(model: ModelBundle, test_set: LabeledDataset, workers: Optional[int] = None) -> float:
    if len(test_set) == 0:
        raise ValueError("test set is empty")
    return float(np.mean(model.predict(test_set.images, workers) == test_set.labels))


def retrain_experiment(model: ModelBundle, train_set: LabeledDataset, test_set: LabeledDataset,
                       selected_images: np.ndarray, selected_labels: Optional[np.ndarray],
                       config: Optional[TrainConfig] = None, workers: Optional[int] = None) -> RetrainResult:
    """
    Fine-tune a copy of the model on train_set plus the selected cases

    Args:
        model: Model before retraining (left untouched)
        train_set: Original training data
        test_set: Held-out data for the accuracy delta
        selected_images: Selected candidate images [n, c, h, w] (may be empty)
        selected_labels: Ground-truth labels of the selected cases
        config: Schedule (default: the desk-scale retraining schedule)
        workers: Thread cap for the accuracy passes

    Returns:
        RetrainResult with test accuracy before and after

    Raises:
        ValueError: if a selected case has no label
    """
    config = config or retrain_config()
    selected_images = np.asarray(selected_images, dtype=np.float32)
    if len(selected_images):
        if selected_labels is None:
            raise ValueError("selected cases carry no labels")
        selected_labels = np.asarray(selected_labels)
        if selected_labels.shape[0] != selected_images.shape[0] or np.any(selected_labels < 0):
            raise ValueError("every selected case needs a ground-truth label")
        images = np.concatenate([train_set.images, selected_images.reshape((-1,) + train_set.image_shape)])
        labels = np.concatenate([train_set.labels, selected_labels.astype(np.int64)])
    else:
        images, labels = train_set.images, train_set.labels

    before = holdout_accuracy(model, test_set, workers)
    logger.info(f"Retraining on {len(labels)} samples ({len(selected_images)} selected), "
                f"test accuracy before: {before:.4f}")
    result = train(model.layers, model.weights, model.as_input(images), labels, config)
    after = holdout_accuracy(model.with_weights(result.weights), test_set, workers)
    logger.info(f"Test accuracy after retraining: {after:.4f} (delta {after - before:+.4f})")
    return RetrainResult(before, after, int(len(selected_images)), result.history)
