"""
Shared fixtures: a hand-checkable two-neuron model with four candidate pairs,
small IDX datasets and a hypothesis profile that keeps the suite fast
"""

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from loaders.bundle_store import ModelBundle, save_model_bundle
from loaders.idx_loader import LabeledDataset, save_idx
from mutation.candidates import CandidateSet, save_candidates_npz
from network.layers import LayerSpec

settings.register_profile('fast', max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.register_profile('thorough', max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile(os.getenv('HYPOTHESIS_PROFILE', 'fast'))

# (x, x') per candidate, two pixels each; the tap layer copies its input
PAIRS = [
    ((0.4, 0.5), (0.3, 0.4)),
    ((0.2, 0.4), (0.2, 0.4)),
    ((0.4, 0.5), (0.3, 0.3)),
    ((0.8, 0.5), (0.7, 0.45)),
]
PAIR_LABELS = [0, 1, 1, 0]


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: needs the MNIST files named by NSS_MNIST_DIR')


def two_neuron_model() -> ModelBundle:
    """dense(2->2) identity tap followed by an identity dense head"""
    layers = [LayerSpec.dense(2, 2), LayerSpec.dense(2, 2)]
    eye = np.eye(2, dtype=np.float32)
    zero = np.zeros(2, dtype=np.float32)
    weights = {0: {'W': eye.copy(), 'b': zero.copy()}, 1: {'W': eye.copy(), 'b': zero.copy()}}
    return ModelBundle(layers, (2,), 2, weights)


def four_pairs() -> CandidateSet:
    originals = np.array([x for x, _ in PAIRS], dtype=np.float32).reshape(4, 1, 1, 2)
    mutated = np.array([xp for _, xp in PAIRS], dtype=np.float32).reshape(4, 1, 1, 2)
    return CandidateSet(originals, mutated, np.array(PAIR_LABELS), 2)


@pytest.fixture
def model():
    return two_neuron_model()


@pytest.fixture
def pairs():
    return four_pairs()


@pytest.fixture
def pair_files(tmp_path):
    """The two-neuron model and its pairs on disk: (bundle dir, candidates .npz)"""
    bundle_dir = str(tmp_path / 'bundle')
    save_model_bundle(two_neuron_model(), bundle_dir)
    npz = str(tmp_path / 'pairs.npz')
    save_candidates_npz(four_pairs(), npz)
    return bundle_dir, npz


def random_dataset(count: int, size: int = 8, classes: int = 3, seed: int = 0) -> LabeledDataset:
    """Pixels on the 1/255 grid so an IDX round trip is lossless"""
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(count, 1, size, size)).astype(np.float32) / np.float32(255.0)
    labels = np.arange(count) % classes
    return LabeledDataset(pixels, labels, classes)


@pytest.fixture
def idx_files(tmp_path):
    """Twelve 8x8 images over three classes: (images path, labels path)"""
    images, labels = str(tmp_path / 'images.idx'), str(tmp_path / 'labels.idx')
    save_idx(random_dataset(12), images, labels)
    return images, labels
