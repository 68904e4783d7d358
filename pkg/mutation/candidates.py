"""
Candidate sets: every original paired with one mutated version
"""

import hashlib
import json
import logging
import os
import zipfile
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional

import numpy as np

from loaders.idx_loader import LabeledDataset, load_idx, save_idx
from mutation.transforms import MutationSpec, draw_signs, mutate, sample_spec
from utils.parallel import DEFAULT_CHUNK, chunk_ranges, parallel_map

logger = logging.getLogger(__name__)

LOG_FORMAT = 'nss-candidates'
LOG_VERSION = 1
NPZ_DATE_TIME = (1980, 1, 1, 0, 0, 0)


@dataclass
class CandidatePair:
    """The dual pair (x, x') with the label carried over from x"""

    index: int
    original: np.ndarray
    mutated: np.ndarray
    label: int
    spec: Optional[MutationSpec] = None


@dataclass
class CandidateSet:
    """
    Column-wise storage of candidate pairs

    originals and mutated share one shape [n, ...]; specs is None for
    materialized sets that were not produced by mutation.
    """

    originals: np.ndarray
    mutated: np.ndarray
    labels: np.ndarray
    class_count: int
    specs: Optional[List[MutationSpec]] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.originals = np.asarray(self.originals, dtype=np.float32)
        self.mutated = np.asarray(self.mutated, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.originals.shape != self.mutated.shape:
            raise ValueError(
                f"originals {list(self.originals.shape)} and mutated {list(self.mutated.shape)} differ in shape"
            )
        if self.originals.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.originals.shape[0]} pairs but {self.labels.shape[0]} labels")
        if self.specs is not None and len(self.specs) != len(self.labels):
            raise ValueError(f"{len(self.specs)} mutation records for {len(self.labels)} pairs")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, index: int) -> CandidatePair:
        return CandidatePair(
            index=int(index),
            original=self.originals[index],
            mutated=self.mutated[index],
            label=int(self.labels[index]),
            spec=self.specs[index] if self.specs is not None else None,
        )

    def __iter__(self) -> Iterator[CandidatePair]:
        for index in range(len(self)):
            yield self[index]

    def subset(self, indices) -> 'CandidateSet':
        indices = np.asarray(indices, dtype=np.int64)
        specs = [self.specs[i] for i in indices] if self.specs is not None else None
        return CandidateSet(self.originals[indices], self.mutated[indices], self.labels[indices],
                            self.class_count, specs, dict(self.meta))

    def mutated_dataset(self) -> LabeledDataset:
        return LabeledDataset(self.mutated, self.labels, self.class_count)


def _mutate_range(images: np.ndarray, seed: int, start: int, stop: int,
                  fixed: Optional[MutationSpec]) -> List[tuple]:
    results = []
    for index in range(start, stop):
        # one independent stream per index keeps the output worker-count independent
        rng = np.random.default_rng([seed, index])
        spec = fixed if fixed is not None else sample_spec(rng)
        if spec.needs_signs:
            spec = draw_signs(spec, rng)
        results.append((mutate(images[index], spec), spec))
    return results


def generate_candidates(dataset: LabeledDataset, seed: int, fixed: Optional[MutationSpec] = None,
                        workers: Optional[int] = None) -> CandidateSet:
    """
    Pair every dataset element with one mutated version

    Args:
        dataset: Source images and labels
        seed: Master seed; element i uses the substream (seed, i)
        fixed: Apply this mutation to every element instead of sampling one
        workers: Thread cap (None = all cores)

    Returns:
        CandidateSet with one pair per element, labels carried over
    """
    if len(dataset) == 0:
        raise ValueError("cannot generate candidates from an empty dataset")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    if fixed is not None:
        fixed.validate()

    mode = f"fixed {fixed}" if fixed is not None else 'random'
    logger.info(f"Generating {len(dataset)} candidates (seed={seed}, {mode})")

    ranges = chunk_ranges(len(dataset), DEFAULT_CHUNK)
    chunks = parallel_map(lambda r: _mutate_range(dataset.images, seed, r[0], r[1], fixed), ranges, workers)
    results = [item for chunk in chunks for item in chunk]

    mutated = np.stack([image for image, _ in results])
    specs = [spec for _, spec in results]
    meta = {'seed': seed, 'fixed': fixed.to_dict() if fixed is not None else None}
    return CandidateSet(dataset.images.copy(), mutated, dataset.labels.copy(), dataset.class_count, specs, meta)


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as fh:
        for block in iter(lambda: fh.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def save_candidate_log(candidates: CandidateSet, path: str, images_path: str, labels_path: str) -> None:
    """
    Write the regenerable form of a candidate set: dataset reference plus one
    mutation record per index

    The JSON is written with sorted keys so equal sets give equal bytes.
    """
    if candidates.specs is None:
        raise ValueError("candidate set has no mutation records to log")
    record = {
        'format': LOG_FORMAT,
        'version': LOG_VERSION,
        'dataset': {
            'images': os.path.basename(images_path),
            'labels': os.path.basename(labels_path),
            'images_sha256': file_sha256(images_path),
            'labels_sha256': file_sha256(labels_path),
            'class_count': candidates.class_count,
        },
        'seed': candidates.meta.get('seed'),
        'fixed': candidates.meta.get('fixed'),
        'count': len(candidates),
        'mutations': [spec.to_dict() for spec in candidates.specs],
    }
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write(json.dumps(record, indent=2, sort_keys=True) + '\n')
    logger.info(f"Wrote candidate log ({len(candidates)} records) to {path}")


def load_candidate_log(path: str, images_path: str, labels_path: str,
                       workers: Optional[int] = None) -> CandidateSet:
    """
    Regenerate a candidate set bit-exactly from its log and the original dataset

    Raises:
        ValueError: on a format mismatch, a dataset hash mismatch or a record count mismatch
    """
    with open(path, 'r', encoding='utf-8') as fh:
        record = json.load(fh)
    if record.get('format') != LOG_FORMAT or record.get('version') != LOG_VERSION:
        raise ValueError(f"{path}: not a version {LOG_VERSION} candidate log")

    ref = record['dataset']
    for key, actual_path in (('images_sha256', images_path), ('labels_sha256', labels_path)):
        if file_sha256(actual_path) != ref[key]:
            raise ValueError(f"{actual_path} does not match the dataset the candidate log was built from")

    dataset = load_idx(images_path, labels_path, ref.get('class_count'))
    specs = [MutationSpec.from_dict(item) for item in record['mutations']]
    if len(specs) != len(dataset):
        raise ValueError(f"candidate log has {len(specs)} records for {len(dataset)} images")

    def regenerate(r):
        return [mutate(dataset.images[i], specs[i]) for i in range(r[0], r[1])]

    chunks = parallel_map(regenerate, chunk_ranges(len(dataset), DEFAULT_CHUNK), workers)
    mutated = np.stack([image for chunk in chunks for image in chunk])
    meta = {'seed': record.get('seed'), 'fixed': record.get('fixed')}
    return CandidateSet(dataset.images, mutated, dataset.labels, dataset.class_count, specs, meta)


def save_candidates_npz(candidates: CandidateSet, path: str) -> None:
    """
    Store a materialized candidate set (arrays plus mutation records)

    Entries carry a fixed zip timestamp, so saving the same set twice gives
    identical bytes.
    """
    specs = json.dumps([s.to_dict() for s in candidates.specs]) if candidates.specs is not None else ''
    arrays = {
        'originals': candidates.originals,
        'mutated': candidates.mutated,
        'labels': candidates.labels,
        'class_count': np.int64(candidates.class_count),
        'specs': np.array(specs),
    }
    with zipfile.ZipFile(path, 'w', zipfile.ZIP_STORED) as archive:
        for name, array in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=NPZ_DATE_TIME)
            with archive.open(info, 'w') as fh:
                np.lib.format.write_array(fh, np.asanyarray(array), allow_pickle=False)


def load_candidates_npz(path: str) -> CandidateSet:
    with np.load(path, allow_pickle=False) as data:
        specs_json = str(data['specs']) if 'specs' in data.files else ''
        specs = [MutationSpec.from_dict(item) for item in json.loads(specs_json)] if specs_json else None
        labels = data['labels'].astype(np.int64)
        class_count = int(data['class_count']) if 'class_count' in data.files else int(labels.max()) + 1
        return CandidateSet(data['originals'], data['mutated'], labels, class_count, specs)


def dump_mutated_idx(candidates: CandidateSet, images_path: str, labels_path: str) -> None:
    """Materialize the mutated images as an IDX pair (pixels rounded to 1/255)"""
    save_idx(candidates.mutated_dataset(), images_path, labels_path)
