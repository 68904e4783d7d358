"""
IDX dataset reader and writer (MNIST / Fashion-MNIST layout)
"""

import logging
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# [offset] [type]          [value]          [description]
# 0000     32 bit integer  0x00000803(2051) magic number (ubyte, 3 dims)
# 0004     32 bit integer  n                number of images
# 0008     32 bit integer  rows
# 0012     32 bit integer  columns
# 0016     unsigned byte   ??               pixels, row-major
IMAGES_MAGIC = 0x00000803
# Pre-converted RGB sets carry an explicit channel dimension: n, c, h, w
IMAGES_RGB_MAGIC = 0x00000804
LABELS_MAGIC = 0x00000801
UBYTE_TYPE = 0x08


class IdxFormatError(ValueError):
    """Raised when an IDX file violates the format"""


@dataclass
class LabeledDataset:
    """Images [n, c, h, w] in [0, 1] with one class index per image"""

    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be [n, c, h, w], got shape {list(self.images.shape)}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.class_count < 1:
            raise ValueError(f"class_count must be positive, got {self.class_count}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: Sequence[int]) -> 'LabeledDataset':
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[indices], self.labels[indices], self.class_count)

    def sample(self, count: int, seed: int = 0) -> 'LabeledDataset':
        """Seeded uniform subset without replacement, kept in ascending index order"""
        if count >= len(self):
            return self
        rng = np.random.default_rng(seed)
        return self.subset(np.sort(rng.choice(len(self), size=count, replace=False)))

    def flat(self) -> np.ndarray:
        """Images flattened to [n, c*h*w] for dense-input models"""
        return self.images.reshape(len(self), -1)


def _read_header(fh: BinaryIO, path: str, magics: Sequence[int]) -> Tuple[int, ...]:
    """
    Parse and validate an IDX header without touching the payload

    Args:
        fh: File opened in binary mode at offset 0
        path: Path used in error messages
        magics: Accepted magic numbers

    Returns:
        Dimension sizes
    """
    head = fh.read(4)
    if len(head) != 4:
        raise IdxFormatError(f"{path}: file too short for an IDX header")
    magic = struct.unpack('>I', head)[0]
    if magic not in magics:
        expected = ', '.join(f"0x{m:08X}" for m in magics)
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08X} (expected {expected})")
    if head[2] != UBYTE_TYPE:
        raise IdxFormatError(f"{path}: unsupported element type 0x{head[2]:02X}")

    ndim = head[3]
    raw = fh.read(4 * ndim)
    if len(raw) != 4 * ndim:
        raise IdxFormatError(f"{path}: truncated header ({ndim} dimensions declared)")
    dims = struct.unpack('>' + 'I' * ndim, raw)
    if any(d == 0 for d in dims):
        raise IdxFormatError(f"{path}: zero-sized dimension in {list(dims)}")

    expected_payload = int(np.prod(dims, dtype=np.int64))
    actual_payload = os.fstat(fh.fileno()).st_size - (4 + 4 * ndim)
    if actual_payload != expected_payload:
        raise IdxFormatError(
            f"{path}: payload has {actual_payload} bytes, header {list(dims)} declares {expected_payload}"
        )
    return dims


def read_idx_images(path: str) -> np.ndarray:
    """Read an IDX image file into float32 [n, c, h, w] scaled to [0, 1]"""
    with open(path, 'rb') as fh:
        dims = _read_header(fh, path, (IMAGES_MAGIC, IMAGES_RGB_MAGIC))
        payload = np.frombuffer(fh.read(), dtype=np.uint8)

    if len(dims) == 3:
        n, rows, cols = dims
        shape = (n, 1, rows, cols)
    else:
        shape = dims
    return (payload.reshape(shape).astype(np.float32) / np.float32(255.0))


def read_idx_labels(path: str) -> np.ndarray:
    with open(path, 'rb') as fh:
        dims = _read_header(fh, path, (LABELS_MAGIC,))
        if len(dims) != 1:
            raise IdxFormatError(f"{path}: label file must have 1 dimension, got {len(dims)}")
        payload = np.frombuffer(fh.read(), dtype=np.uint8)
    return payload.astype(np.int64)


def load_idx(images_path: str, labels_path: str, class_count: Optional[int] = None) -> LabeledDataset:
    """
    Load an IDX image/label pair

    Args:
        images_path: IDX images file (magic 0x00000803, or 0x00000804 for n,c,h,w)
        labels_path: IDX labels file (magic 0x00000801)
        class_count: Number of classes (default: largest label + 1)

    Returns:
        LabeledDataset with pixels divided by 255

    Raises:
        IdxFormatError: bad magic, length mismatch, or image/label count mismatch
    """
    logger.info(f"Loading IDX dataset: {images_path}, {labels_path}")
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")

    if class_count is None:
        class_count = int(labels.max()) + 1
    dataset = LabeledDataset(images, labels, class_count)
    logger.info(f"Loaded {len(dataset)} images of shape {list(dataset.image_shape)}, {class_count} classes")
    return dataset


def save_idx(dataset: LabeledDataset, images_path: str, labels_path: str) -> None:
    """
    Write a dataset as IDX files (pixels rounded to the nearest 1/255)

    Used for fixtures and for materialized dumps of mutated candidates.
    """
    pixels = np.clip(np.rint(dataset.images * 255.0), 0, 255).astype(np.uint8)
    n, c, h, w = pixels.shape
    if c == 1:
        header = struct.pack('>IIII', IMAGES_MAGIC, n, h, w)
    else:
        header = struct.pack('>IIIII', IMAGES_RGB_MAGIC, n, c, h, w)

    with open(images_path, 'wb') as fh:
        fh.write(header)
        fh.write(pixels.tobytes())
    with open(labels_path, 'wb') as fh:
        fh.write(struct.pack('>II', LABELS_MAGIC, len(dataset)))
        fh.write(dataset.labels.astype(np.uint8).tobytes())
    logger.info(f"Wrote {n} images to {images_path}")
