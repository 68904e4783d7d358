"""
Model bundle storage: a JSON manifest plus one little-endian float32 weight file
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from network.engine import ActivationTrace, Weights, check_weights, class_probabilities, forward, predict
from network.layers import LayerSpec, infer_shapes, last_encoder_layer, param_count, param_shapes

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = 'manifest.json'
WEIGHTS_NAME = 'weights.bin'
PROFILE_NAME = 'kmnc_profile.npy'
PROFILE_META_NAME = 'kmnc_profile.json'
REQUIRED_KEYS = ('layers', 'input_shape', 'class_count')


class BundleFormatError(ValueError):
    """Raised when a bundle directory is inconsistent"""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        self.layer_index = layer_index
        prefix = f"layer {layer_index}: " if layer_index is not None else ''
        super().__init__(prefix + message)


@dataclass
class ModelBundle:
    """A sequential classifier: architecture manifest plus weights"""

    layers: List[LayerSpec]
    input_shape: Tuple[int, ...]
    class_count: int
    weights: Weights = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        shapes = infer_shapes(self.layers, self.input_shape)
        if shapes[-1] != (self.class_count,):
            raise ValueError(f"final layer emits shape {list(shapes[-1])}, expected [{self.class_count}]")

    @property
    def shapes(self) -> List[Tuple[int, ...]]:
        return infer_shapes(self.layers, self.input_shape)

    def default_tap(self) -> int:
        return last_encoder_layer(self.layers)

    def as_input(self, images: np.ndarray) -> np.ndarray:
        """Reshape a batch to this model's input shape (e.g. [n,1,28,28] -> [n,784])"""
        images = np.asarray(images, dtype=np.float32)
        return images.reshape((images.shape[0],) + self.input_shape)

    def forward(self, batch: np.ndarray, taps: Iterable[int] = (),
                workers: Optional[int] = None) -> Tuple[np.ndarray, ActivationTrace]:
        return forward(self.layers, self.weights, self.as_input(batch), taps, workers)

    def predict(self, batch: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
        return predict(self.layers, self.weights, self.as_input(batch), workers)

    def probabilities(self, batch: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
        return class_probabilities(self.layers, self.weights, self.as_input(batch), workers)

    def activations(self, batch: np.ndarray, layer: int, workers: Optional[int] = None) -> np.ndarray:
        """Tap-layer activations flattened to [batch, neurons]"""
        _, trace = self.forward(batch, taps=(layer,), workers=workers)
        return trace.neurons(layer)

    def with_weights(self, weights: Weights) -> 'ModelBundle':
        return ModelBundle(list(self.layers), self.input_shape, self.class_count, weights, self.version)

    def manifest(self) -> Dict:
        return {
            'format_version': self.version,
            'input_shape': list(self.input_shape),
            'class_count': self.class_count,
            'layers': [spec.to_dict() for spec in self.layers],
        }


def _weight_bytes(params: Dict[str, np.ndarray]) -> bytes:
    # dense: [out,in] then bias; conv: [out_c,in_c,kh,kw] then bias
    return (np.ascontiguousarray(params['W'], dtype='<f4').tobytes()
            + np.ascontiguousarray(params['b'], dtype='<f4').tobytes())


def save_model_bundle(bundle: ModelBundle, directory: str) -> None:
    """
    Write manifest.json and weights.bin into a directory

    Args:
        bundle: Model to save
        directory: Target directory (created if needed)
    """
    check_weights(bundle.layers, bundle.weights)
    os.makedirs(directory, exist_ok=True)

    manifest = json.dumps(bundle.manifest(), indent=2, sort_keys=True) + '\n'
    with open(os.path.join(directory, MANIFEST_NAME), 'w', encoding='utf-8') as fh:
        fh.write(manifest)

    with open(os.path.join(directory, WEIGHTS_NAME), 'wb') as fh:
        for index, spec in enumerate(bundle.layers):
            if spec.trainable:
                fh.write(_weight_bytes(bundle.weights[index]))
    logger.info(f"Saved model bundle ({len(bundle.layers)} layers) to {directory}")


def _parse_layers(raw: Sequence[Dict]) -> List[LayerSpec]:
    layers = []
    for index, data in enumerate(raw):
        try:
            layers.append(LayerSpec.from_dict(data))
        except (KeyError, TypeError, ValueError) as e:
            raise BundleFormatError(f"invalid layer entry {data!r}: {e}", index) from e
    return layers


def load_model_bundle(directory: str) -> ModelBundle:
    """
    Load and validate a bundle directory

    Raises:
        BundleFormatError: version mismatch, missing manifest key, unknown layer kind or weight byte-count mismatch
    """
    with open(os.path.join(directory, MANIFEST_NAME), 'r', encoding='utf-8') as fh:
        manifest = json.load(fh)

    version = manifest.get('format_version')
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"unsupported format version {version!r} (expected {FORMAT_VERSION})")
    for key in REQUIRED_KEYS:
        if key not in manifest:
            raise BundleFormatError(f"manifest is missing {key!r}")

    layers = _parse_layers(manifest['layers'])
    input_shape = tuple(manifest['input_shape'])
    infer_shapes(layers, input_shape)

    with open(os.path.join(directory, WEIGHTS_NAME), 'rb') as fh:
        blob = fh.read()

    weights = {}
    offset = 0
    for index, spec in enumerate(layers):
        if not spec.trainable:
            continue
        needed = 4 * param_count(spec)
        if offset + needed > len(blob):
            raise BundleFormatError(
                f"{spec.kind} needs {needed} weight bytes at offset {offset}, file has {len(blob)}", index
            )
        params = {}
        for name, shape in param_shapes(spec).items():
            count = int(np.prod(shape))
            params[name] = np.frombuffer(blob, dtype='<f4', count=count, offset=offset).astype(np.float32).reshape(shape)
            offset += 4 * count
        weights[index] = params

    if offset != len(blob):
        raise BundleFormatError(f"weights.bin has {len(blob) - offset} trailing bytes")

    bundle = ModelBundle(layers, input_shape, int(manifest['class_count']), weights, version)
    logger.info(f"Loaded model bundle from {directory}")
    return bundle


def save_profile_sidecar(directory: str, layer: int, low: np.ndarray, high: np.ndarray, k_bins: int) -> str:
    """
    Store a KMNC coverage profile next to a bundle

    Bounds go to a [2, neurons] .npy array (low row, then high row) and the
    layer and bin count to a small JSON file; both are byte-stable.
    """
    path = os.path.join(directory, PROFILE_NAME)
    np.save(path, np.stack([low, high]).astype('<f4'))
    with open(os.path.join(directory, PROFILE_META_NAME), 'w', encoding='utf-8') as fh:
        fh.write(json.dumps({'layer': int(layer), 'k_bins': int(k_bins)}, sort_keys=True) + '\n')
    return path


def has_profile_sidecar(directory: str) -> bool:
    return os.path.exists(os.path.join(directory, PROFILE_NAME))


def load_profile_sidecar(directory: str) -> Tuple[int, np.ndarray, np.ndarray, int]:
    """Returns (layer, low, high, k_bins)"""
    with open(os.path.join(directory, PROFILE_META_NAME), 'r', encoding='utf-8') as fh:
        meta = json.load(fh)
    bounds = np.load(os.path.join(directory, PROFILE_NAME), allow_pickle=False).astype(np.float32)
    if bounds.ndim != 2 or bounds.shape[0] != 2:
        raise BundleFormatError(f"coverage profile must be [2, neurons], got {list(bounds.shape)}")
    return int(meta['layer']), bounds[0].copy(), bounds[1].copy(), int(meta['k_bins'])
