"""
Acceptance run on real MNIST files

Set NSS_MNIST_DIR to a directory holding the four standard IDX files
(train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte,
t10k-labels-idx1-ubyte) to enable these tests.
"""

import os

import numpy as np
import pytest

from evaluation.harness import evaluate_selectors
from evaluation.sweeps import sensitivity_study, sweep_k, sweep_layers
from loaders.bundle_store import ModelBundle
from loaders.idx_loader import load_idx
from mutation.candidates import generate_candidates
from network.trainer import TrainConfig, init_weights, train
from nss_cli import build_architecture
from selection.baselines import BaselineConfig
from selection.nss import SelectionConfig, select
from selection.runner import SelectorInputs

MNIST_DIR = os.getenv('NSS_MNIST_DIR', '')
SEEDS = (0, 1, 2)

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(not os.path.isdir(MNIST_DIR), reason='NSS_MNIST_DIR not set'),
]


def mnist(prefix):
    return load_idx(os.path.join(MNIST_DIR, f"{prefix}-images-idx3-ubyte"),
                    os.path.join(MNIST_DIR, f"{prefix}-labels-idx1-ubyte"), 10)


@pytest.fixture(scope='module')
def data():
    return mnist('train').sample(10_000, seed=0), mnist('t10k')


@pytest.fixture(scope='module')
def checkpoints(data):
    """(early, converged) MLP 784-128-10 bundles"""
    train_set, _ = data
    layers, input_shape = build_architecture('mlp', train_set.image_shape, 10)
    model = ModelBundle(layers, input_shape, 10, init_weights(layers, input_shape, seed=0))
    images = model.as_input(train_set.images)

    early = train(layers, model.weights, images[:1000], train_set.labels[:1000],
                  TrainConfig(epochs=1, batch_size=64, lr=0.001))
    converged = train(layers, model.weights, images, train_set.labels,
                      TrainConfig(epochs=10, batch_size=64, lr=0.01, decay_epochs=(7,)))
    return model.with_weights(early.weights), model.with_weights(converged.weights)


@pytest.fixture(scope='module')
def trained(checkpoints):
    return checkpoints[1]


def accuracy(model, dataset):
    return float(np.mean(model.predict(dataset.images) == dataset.labels))


def test_model_learns_digits(trained, data):
    _, test_set = data
    assert accuracy(trained, test_set) >= 0.90


def test_nss_beats_random_and_coverage_at_five_percent(trained, data):
    train_set, test_set = data
    fdr = {name: [] for name in ('nss', 'random', 'nac', 'kmnc')}
    auc = {'nss': [], 'random': []}
    for seed in SEEDS:
        candidates = generate_candidates(test_set, seed=seed)
        inputs = SelectorInputs(trained, candidates, SelectionConfig(k=0.1, seed=seed), BaselineConfig(seed=seed),
                                train_set=train_set)
        report = evaluate_selectors(inputs, list(fdr), [0.05])
        for name in fdr:
            fdr[name].append(report.fdr[name][0.05])
        for name in auc:
            auc[name].append(report.ftcr[name].auc)

    median = {name: float(np.median(values)) for name, values in fdr.items()}
    assert median['nss'] >= 1.5 * median['random']
    assert median['nss'] >= median['nac']
    assert median['nss'] >= median['kmnc']
    assert np.median(auc['nss']) >= np.median(auc['random'])


def test_early_checkpoint_is_more_sensitive(checkpoints, data):
    early, converged = checkpoints
    _, test_set = data
    assert accuracy(early, test_set) < accuracy(converged, test_set)
    candidates = generate_candidates(test_set.sample(2000, seed=4), seed=0)
    assert (sensitivity_study(early, candidates, k=0.1)['top_mean']
            > sensitivity_study(converged, candidates, k=0.1)['top_mean'])


def test_sweep_trends(trained, data):
    _, test_set = data
    candidates = generate_candidates(test_set, seed=0)
    by_k = {row['k']: row['fdr'] for row in sweep_k(trained, candidates, ks=[0.01, 1.0])}
    assert by_k[1.0] >= by_k[0.01] - 0.05

    rows = sweep_layers(trained, candidates, layers=[0, 1])
    assert rows[-1]['fdr'] >= rows[0]['fdr'] - 0.05


def test_selection_is_reproducible(trained, data):
    _, test_set = data
    candidates = generate_candidates(test_set.sample(500, seed=3), seed=1)
    config = SelectionConfig(k=0.1, budget=0.1)
    first = select(trained, candidates, config, workers=1)
    second = select(trained, candidates, config, workers=8)
    assert first.order == second.order
    assert first.scores == second.scores
