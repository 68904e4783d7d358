"""
Tests for weight initialization and the SGD trainer
"""

import math

import numpy as np
import pytest

from network.engine import accuracy
from network.layers import LayerSpec
from network.trainer import (TrainConfig, TrainingDivergedError, init_weights, loss_and_grads, retrain_config,
                             train)

MLP = [LayerSpec.dense(4, 16), LayerSpec('relu'), LayerSpec.dense(16, 3)]


def blobs(n=90, seed=0):
    """Three well separated clusters in 4-D"""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 3
    centers = np.eye(3, 4) * 3.0
    return (centers[labels] + rng.normal(0, 0.3, size=(n, 4))).astype(np.float32), labels


def test_zero_weights_give_log_class_count_loss():
    weights = {i: {k: np.zeros_like(v) for k, v in p.items()} for i, p in init_weights(MLP, (4,)).items()}
    images, labels = blobs(12)
    loss, _ = loss_and_grads(MLP, weights, images, labels)
    assert loss == pytest.approx(math.log(3), rel=1e-6)


def test_init_is_seeded_and_xavier_scaled():
    layers = [LayerSpec.dense(300, 200)]
    a = init_weights(layers, (300,), seed=5)
    b = init_weights(layers, (300,), seed=5)
    c = init_weights(layers, (300,), seed=6)
    assert a[0]['W'].tobytes() == b[0]['W'].tobytes()
    assert a[0]['W'].tobytes() != c[0]['W'].tobytes()
    assert a[0]['W'].dtype == np.float32
    assert not a[0]['b'].any()
    assert a[0]['W'].std() == pytest.approx(math.sqrt(2.0 / 500), rel=0.02)


def test_zero_learning_rate_leaves_weights_unchanged():
    weights = init_weights(MLP, (4,), seed=1)
    images, labels = blobs(30)
    result = train(MLP, weights, images, labels, TrainConfig(epochs=2, batch_size=8, lr=0.0))
    for index, params in weights.items():
        for name, value in params.items():
            np.testing.assert_array_equal(result.weights[index][name], value)


def test_training_learns_separable_data():
    images, labels = blobs()
    weights = init_weights(MLP, (4,), seed=2)
    before = accuracy(MLP, weights, images, labels)
    result = train(MLP, weights, images, labels, TrainConfig(epochs=20, batch_size=16, lr=0.05),
                   eval_set=(images, labels))
    assert len(result.history) == 20
    assert result.history[-1]['loss'] < result.history[0]['loss']
    assert result.history[-1]['eval_accuracy'] >= 0.95
    assert result.history[-1]['train_accuracy'] >= before


def test_training_is_deterministic_and_leaves_input_untouched():
    images, labels = blobs()
    weights = init_weights(MLP, (4,), seed=3)
    snapshot = weights[0]['W'].copy()
    config = TrainConfig(epochs=3, batch_size=10, lr=0.02, seed=9)
    first = train(MLP, weights, images, labels, config)
    second = train(MLP, weights, images, labels, config)
    np.testing.assert_array_equal(weights[0]['W'], snapshot)
    for index in first.weights:
        assert first.weights[index]['W'].tobytes() == second.weights[index]['W'].tobytes()


def test_divergence_is_reported():
    images, labels = blobs(30)
    images = images * 1e30
    with pytest.raises(TrainingDivergedError) as e:
        train(MLP, init_weights(MLP, (4,)), images, labels, TrainConfig(epochs=2, lr=1e10, momentum=0.0))
    assert e.value.epoch >= 1


def test_schedule_decay():
    config = retrain_config()
    assert config.lr_at(0) == pytest.approx(0.001)
    assert config.lr_at(5) == pytest.approx(0.0001)
    assert config.lr_at(9) == pytest.approx(0.00001)
    assert config.nesterov and config.momentum == 0.9 and config.epochs == 10


@pytest.mark.parametrize('field, value', [('epochs', 0), ('batch_size', 0), ('lr', -1.0), ('momentum', 1.0),
                                          ('lr', float('nan'))])
def test_invalid_config(field, value):
    config = TrainConfig()
    setattr(config, field, value)
    with pytest.raises(ValueError):
        config.validate()


def test_empty_dataset_is_rejected():
    with pytest.raises(ValueError):
        train(MLP, init_weights(MLP, (4,)), np.zeros((0, 4), dtype=np.float32), np.zeros(0), TrainConfig())
