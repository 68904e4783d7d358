"""
Tests for IDX datasets and model bundles
"""

import json
import os
import struct

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import random_dataset
from loaders.bundle_store import (BundleFormatError, ModelBundle, load_model_bundle, load_profile_sidecar,
                                  save_model_bundle, save_profile_sidecar)
from loaders.idx_loader import IdxFormatError, LabeledDataset, load_idx, read_idx_images, save_idx
from network.layers import LayerSpec
from network.trainer import init_weights

TINY_IMAGES = struct.pack('>IIII', 0x00000803, 2, 2, 2) + bytes([0, 255, 51, 102, 255, 0, 0, 255])
TINY_LABELS = struct.pack('>II', 0x00000801, 2) + bytes([7, 3])


def write(path, data):
    with open(path, 'wb') as fh:
        fh.write(data)
    return str(path)


class TestIdx:
    def test_tiny_pair(self, tmp_path):
        images = write(tmp_path / 'i.idx', TINY_IMAGES)
        labels = write(tmp_path / 'l.idx', TINY_LABELS)
        dataset = load_idx(images, labels, class_count=10)
        assert dataset.images.shape == (2, 1, 2, 2)
        assert dataset.images.dtype == np.float32
        np.testing.assert_allclose(dataset.images[0, 0], [[0.0, 1.0], [0.2, 0.4]], rtol=1e-6)
        assert dataset.labels.tolist() == [7, 3]
        assert dataset.class_count == 10

    def test_class_count_defaults_to_largest_label(self, tmp_path):
        dataset = load_idx(write(tmp_path / 'i.idx', TINY_IMAGES), write(tmp_path / 'l.idx', TINY_LABELS))
        assert dataset.class_count == 8

    def test_count_mismatch(self, tmp_path):
        labels = struct.pack('>II', 0x00000801, 3) + bytes([1, 2, 3])
        with pytest.raises(IdxFormatError):
            load_idx(write(tmp_path / 'i.idx', TINY_IMAGES), write(tmp_path / 'l.idx', labels))

    def test_bad_magic(self, tmp_path):
        with pytest.raises(IdxFormatError, match='magic'):
            read_idx_images(write(tmp_path / 'i.idx', TINY_LABELS))

    def test_truncated_payload(self, tmp_path):
        with pytest.raises(IdxFormatError, match='payload'):
            read_idx_images(write(tmp_path / 'i.idx', TINY_IMAGES[:-1]))

    @given(st.integers(0, 15), st.integers(0, 255))
    def test_corrupted_header_is_rejected(self, tmp_path, position, value):
        assume(TINY_IMAGES[position] != value)
        data = bytearray(TINY_IMAGES)
        data[position] = value
        with pytest.raises(IdxFormatError):
            read_idx_images(write(tmp_path / 'fuzz.idx', bytes(data)))

    def test_hundred_fuzzed_headers_all_rejected(self, tmp_path):
        rng = np.random.default_rng(0)
        accepted = 0
        for i in range(100):
            data = bytearray(TINY_IMAGES)
            position = int(rng.integers(16))
            data[position] = (data[position] + int(rng.integers(1, 256))) % 256
            try:
                read_idx_images(write(tmp_path / f"fuzz{i}.idx", bytes(data)))
                accepted += 1
            except IdxFormatError:
                pass
        assert accepted == 0

    def test_save_round_trip(self, tmp_path):
        dataset = random_dataset(5, size=4)
        images, labels = str(tmp_path / 'i.idx'), str(tmp_path / 'l.idx')
        save_idx(dataset, images, labels)
        loaded = load_idx(images, labels, dataset.class_count)
        np.testing.assert_array_equal(loaded.images, dataset.images)
        np.testing.assert_array_equal(loaded.labels, dataset.labels)

    def test_rgb_layout(self, tmp_path):
        pixels = np.random.default_rng(0).integers(0, 256, size=(2, 3, 4, 4)).astype(np.float32) / np.float32(255)
        dataset = LabeledDataset(pixels, [0, 1], 2)
        images, labels = str(tmp_path / 'i.idx'), str(tmp_path / 'l.idx')
        save_idx(dataset, images, labels)
        assert load_idx(images, labels).images.shape == (2, 3, 4, 4)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((2, 1, 2, 2)), [0, 5], 3)
        with pytest.raises(ValueError):
            LabeledDataset(np.full((1, 1, 2, 2), 2.0), [0], 1)

    def test_sample_is_seeded_and_sorted(self):
        dataset = random_dataset(50)
        a = dataset.sample(10, seed=4)
        b = dataset.sample(10, seed=4)
        np.testing.assert_array_equal(a.images, b.images)
        assert len(a) == 10
        assert dataset.sample(100) is dataset


CNN = [LayerSpec.conv2d(1, 2, (3, 3)), LayerSpec('relu'), LayerSpec.maxpool2d(2),
       LayerSpec('flatten'), LayerSpec.dense(8, 3)]


class TestBundle:
    def test_dense_weight_bytes(self, tmp_path):
        layers = [LayerSpec.dense(2, 3)]
        save_model_bundle(ModelBundle(layers, (2,), 3, init_weights(layers, (2,))), str(tmp_path))
        assert os.path.getsize(tmp_path / 'weights.bin') == 36

    @pytest.mark.parametrize('seed', range(20))
    def test_round_trip_preserves_predictions(self, tmp_path, seed):
        bundle = ModelBundle(CNN, (1, 6, 6), 3, init_weights(CNN, (1, 6, 6), seed))
        directory = str(tmp_path / f"b{seed}")
        save_model_bundle(bundle, directory)
        loaded = load_model_bundle(directory)
        batch = np.random.default_rng(seed).random((4, 1, 6, 6)).astype(np.float32)
        assert loaded.layers == bundle.layers
        np.testing.assert_array_equal(loaded.forward(batch)[0], bundle.forward(batch)[0])

    def test_manifest_is_byte_stable(self, tmp_path):
        bundle = ModelBundle(CNN, (1, 6, 6), 3, init_weights(CNN, (1, 6, 6)))
        save_model_bundle(bundle, str(tmp_path / 'a'))
        save_model_bundle(bundle, str(tmp_path / 'b'))
        for name in ('manifest.json', 'weights.bin'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    def test_truncated_weights_name_the_layer(self, tmp_path):
        bundle = ModelBundle(CNN, (1, 6, 6), 3, init_weights(CNN, (1, 6, 6)))
        save_model_bundle(bundle, str(tmp_path))
        blob = (tmp_path / 'weights.bin').read_bytes()
        (tmp_path / 'weights.bin').write_bytes(blob[:-8])
        with pytest.raises(BundleFormatError) as e:
            load_model_bundle(str(tmp_path))
        assert e.value.layer_index == 4
        assert 'layer 4' in str(e.value)

    def test_trailing_bytes(self, tmp_path):
        bundle = ModelBundle(CNN, (1, 6, 6), 3, init_weights(CNN, (1, 6, 6)))
        save_model_bundle(bundle, str(tmp_path))
        with open(tmp_path / 'weights.bin', 'ab') as fh:
            fh.write(b'\0\0\0\0')
        with pytest.raises(BundleFormatError, match='trailing'):
            load_model_bundle(str(tmp_path))

    def test_version_and_kind_checks(self, tmp_path):
        bundle = ModelBundle(CNN, (1, 6, 6), 3, init_weights(CNN, (1, 6, 6)))
        save_model_bundle(bundle, str(tmp_path))
        manifest = json.loads((tmp_path / 'manifest.json').read_text())

        manifest['format_version'] = 2
        (tmp_path / 'manifest.json').write_text(json.dumps(manifest))
        with pytest.raises(BundleFormatError, match='version'):
            load_model_bundle(str(tmp_path))

        manifest['format_version'] = 1
        manifest['layers'][1] = {'kind': 'gelu'}
        (tmp_path / 'manifest.json').write_text(json.dumps(manifest))
        with pytest.raises(BundleFormatError) as e:
            load_model_bundle(str(tmp_path))
        assert e.value.layer_index == 1

    @pytest.mark.parametrize('key', ['layers', 'input_shape', 'class_count'])
    def test_missing_manifest_key(self, tmp_path, key):
        bundle = ModelBundle(CNN, (1, 6, 6), 3, init_weights(CNN, (1, 6, 6)))
        save_model_bundle(bundle, str(tmp_path))
        manifest = json.loads((tmp_path / 'manifest.json').read_text())
        del manifest[key]
        (tmp_path / 'manifest.json').write_text(json.dumps(manifest))
        with pytest.raises(BundleFormatError, match=key):
            load_model_bundle(str(tmp_path))

    def test_head_must_match_class_count(self):
        with pytest.raises(ValueError):
            ModelBundle([LayerSpec.dense(2, 3)], (2,), 4, {})

    def test_profile_sidecar(self, tmp_path):
        low = np.array([0.0, -1.0], dtype=np.float32)
        high = np.array([1.0, 2.5], dtype=np.float32)
        save_profile_sidecar(str(tmp_path), 3, low, high, 10)
        first = (tmp_path / 'kmnc_profile.npy').read_bytes()
        layer, got_low, got_high, k_bins = load_profile_sidecar(str(tmp_path))
        assert (layer, k_bins) == (3, 10)
        np.testing.assert_array_equal(got_low, low)
        np.testing.assert_array_equal(got_high, high)
        save_profile_sidecar(str(tmp_path), 3, low, high, 10)
        assert (tmp_path / 'kmnc_profile.npy').read_bytes() == first
