"""
Tests for benign mutations and candidate sets
"""

import json
import zipfile
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_dataset
from loaders.idx_loader import load_idx
from mutation.candidates import (generate_candidates, load_candidate_log, load_candidates_npz, save_candidate_log,
                                 save_candidates_npz)
from mutation.transforms import (BLUR_SIZES, MUTATION_KINDS, PARAM_RANGES, MutationSpec, MutationSpecError,
                                 box_blur, mutate, sample_spec)

images_01 = arrays(np.float32, (1, 6, 6), elements=st.floats(0, 1, width=32))


def dot_image(size=9, row=4, col=4):
    image = np.zeros((1, size, size), dtype=np.float32)
    image[0, row, col] = 1.0
    return image


class TestTransforms:
    def test_unit_brightness_is_identity(self):
        image = random_dataset(1).images[0]
        np.testing.assert_array_equal(mutate(image, MutationSpec('brightness', (1.0,))), image)

    def test_unit_contrast_is_identity(self):
        image = random_dataset(1).images[0]
        np.testing.assert_allclose(mutate(image, MutationSpec('contrast', (1.0,))), image, atol=1e-7)

    def test_brightness_is_a_gain(self):
        image = np.full((1, 2, 2), 0.4, dtype=np.float32)
        np.testing.assert_allclose(mutate(image, MutationSpec('brightness', (1.5,))), 0.6, rtol=1e-6)

    @pytest.mark.parametrize('size', BLUR_SIZES)
    def test_blur_keeps_constant_image(self, size):
        image = np.full((1, 10, 10), 0.3, dtype=np.float32)
        np.testing.assert_allclose(mutate(image, MutationSpec('blur', (size,))), image, rtol=1e-6)

    @pytest.mark.parametrize('size', BLUR_SIZES)
    def test_blur_spreads_mass_evenly(self, size):
        out = box_blur(dot_image(15, 7, 7)[0].astype(np.float64), size)
        assert out.sum() == pytest.approx(1.0)
        assert np.count_nonzero(out) == size * size
        assert out.max() == pytest.approx(1.0 / (size * size))

    def test_shift_moves_pixels(self):
        out = mutate(dot_image(10), MutationSpec('shift', (0.1, 0.1), (1, 1)))
        assert out[0, 5, 5] == pytest.approx(1.0)
        assert out[0, 4, 4] == pytest.approx(0.0)

    def test_rotation_keeps_center_and_moves_off_center_pixels(self):
        center = mutate(dot_image(), MutationSpec('rotation', (15.0,), (1,)))
        assert center[0, 4, 4] == pytest.approx(1.0, abs=1e-6)

        corner = dot_image(9, 0, 4)
        rotated = mutate(corner, MutationSpec('rotation', (25.0,), (-1,)))
        assert rotated[0, 0, 4] < 0.5
        assert rotated.sum() > 0

    def test_scale_up_spreads_center_dot(self):
        out = mutate(dot_image(), MutationSpec('scale', (1.2,)))
        assert out[0, 4, 4] == pytest.approx(1.0)
        assert out.sum() >= 1.0

    def test_shear_direction_depends_on_sign(self):
        image = dot_image(9, 0, 4)
        left = mutate(image, MutationSpec('shear', (30.0,), (1,)))
        right = mutate(image, MutationSpec('shear', (30.0,), (-1,)))
        assert not np.array_equal(left, right)

    @given(images_01, st.sampled_from(MUTATION_KINDS), st.integers(0, 2 ** 32 - 1))
    def test_output_stays_in_range(self, image, kind, seed):
        rng = np.random.default_rng(seed)
        spec = sample_spec(rng)
        if spec.kind != kind:
            count, _, (low, high) = PARAM_RANGES[kind]
            params = (BLUR_SIZES[-1],) if kind == 'blur' else (high,) * count
            spec = MutationSpec(kind, params)
        out = mutate(image, spec, rng)
        assert out.shape == image.shape
        assert out.dtype == np.float32
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_kind_frequencies_are_uniform(self):
        rng = np.random.default_rng(0)
        counts = Counter(sample_spec(rng).kind for _ in range(10000))
        assert set(counts) == set(MUTATION_KINDS)
        for kind in MUTATION_KINDS:
            assert abs(counts[kind] / 10000 - 1 / 7) < 0.02

    def test_sampled_parameters_in_range(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            spec = sample_spec(rng)
            spec.validate()
            assert not spec.needs_signs

    @pytest.mark.parametrize('text', ['scale:2.0', 'blur:4', 'rotation:40', 'fog:1', 'scale', 'shift:0.1',
                                      'contrast:x'])
    def test_invalid_specs(self, text):
        with pytest.raises(MutationSpecError):
            MutationSpec.parse(text)

    def test_parse(self):
        assert MutationSpec.parse('shift:0.1,0.05') == MutationSpec('shift', (0.1, 0.05))
        assert MutationSpec.parse('blur:3').params == (3,)
        assert MutationSpec.parse('rotation:10').needs_signs

    def test_unsigned_geometric_needs_generator(self):
        with pytest.raises(MutationSpecError):
            mutate(dot_image(), MutationSpec('rotation', (10.0,)))

    def test_rejects_bad_images(self):
        with pytest.raises(ValueError):
            mutate(np.zeros((9, 9)), MutationSpec('scale', (1.0,)))
        with pytest.raises(ValueError):
            mutate(np.full((1, 2, 2), 1.5), MutationSpec('scale', (1.0,)))


class TestCandidates:
    def test_pairs_carry_labels(self):
        dataset = random_dataset(6)
        candidates = generate_candidates(dataset, seed=0)
        assert len(candidates) == 6
        for pair in candidates:
            assert pair.label == dataset.labels[pair.index]
            np.testing.assert_array_equal(pair.original, dataset.images[pair.index])
            assert pair.spec is not None and not pair.spec.needs_signs

    def test_seeded_and_worker_independent(self):
        dataset = random_dataset(300)
        a = generate_candidates(dataset, seed=3, workers=1)
        b = generate_candidates(dataset, seed=3, workers=4)
        c = generate_candidates(dataset, seed=4, workers=1)
        assert a.mutated.tobytes() == b.mutated.tobytes()
        assert a.specs == b.specs
        assert a.specs != c.specs

    def test_fixed_mutation(self):
        candidates = generate_candidates(random_dataset(20), seed=1, fixed=MutationSpec.parse('shift:0.1,0.1'))
        assert {s.kind for s in candidates.specs} == {'shift'}
        assert len({s.signs for s in candidates.specs}) > 1
        assert candidates.meta['fixed'] == {'kind': 'shift', 'params': [0.1, 0.1], 'signs': []}

    def test_log_regenerates_bit_exactly(self, tmp_path, idx_files):
        images, labels = idx_files
        dataset = load_idx(images, labels)
        candidates = generate_candidates(dataset, seed=7)
        log = str(tmp_path / 'candidates.json')
        save_candidate_log(candidates, log, images, labels)
        record = json.loads(open(log).read())
        assert record['count'] == 12 and record['seed'] == 7
        assert record['dataset']['images'] == 'images.idx'

        restored = load_candidate_log(log, images, labels, workers=2)
        assert restored.mutated.tobytes() == candidates.mutated.tobytes()
        assert restored.specs == candidates.specs

    def test_log_rejects_other_dataset(self, tmp_path, idx_files):
        images, labels = idx_files
        candidates = generate_candidates(load_idx(images, labels), seed=0)
        log = str(tmp_path / 'candidates.json')
        save_candidate_log(candidates, log, images, labels)
        with open(images, 'r+b') as fh:
            fh.seek(-1, 2)
            fh.write(b'\x01')
        with pytest.raises(ValueError, match='does not match'):
            load_candidate_log(log, images, labels)

    def test_npz_round_trip(self, tmp_path):
        candidates = generate_candidates(random_dataset(5), seed=2)
        path = str(tmp_path / 'c.npz')
        save_candidates_npz(candidates, path)
        loaded = load_candidates_npz(path)
        np.testing.assert_array_equal(loaded.mutated, candidates.mutated)
        assert loaded.specs == candidates.specs
        assert loaded.class_count == candidates.class_count

    def test_npz_is_byte_stable(self, tmp_path):
        candidates = generate_candidates(random_dataset(5), seed=2)
        first, second = str(tmp_path / 'a.npz'), str(tmp_path / 'b.npz')
        save_candidates_npz(candidates, first)
        save_candidates_npz(candidates, second)
        assert open(first, 'rb').read() == open(second, 'rb').read()
        with zipfile.ZipFile(first) as archive:
            assert {info.date_time for info in archive.infolist()} == {(1980, 1, 1, 0, 0, 0)}

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            generate_candidates(random_dataset(0), seed=0)
