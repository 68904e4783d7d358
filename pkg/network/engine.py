"""
Forward evaluation of sequential networks with activation capture
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, softmax

from network.layers import LayerSpec, ShapeError, infer_shapes, param_shapes
from utils.parallel import DEFAULT_CHUNK, chunk_ranges, parallel_map

logger = logging.getLogger(__name__)

Weights = Dict[int, Dict[str, np.ndarray]]


@dataclass
class ActivationTrace:
    """Post-activation outputs of the tapped layers, batch dimension first"""

    layers: Dict[int, np.ndarray] = field(default_factory=dict)

    def __contains__(self, layer: int) -> bool:
        return layer in self.layers

    def __getitem__(self, layer: int) -> np.ndarray:
        if layer not in self.layers:
            raise KeyError(f"layer {layer} was not tapped (tapped: {sorted(self.layers)})")
        return self.layers[layer]

    def neurons(self, layer: int) -> np.ndarray:
        """Activations of one layer flattened to [batch, neurons]"""
        values = self[layer]
        return values.reshape(values.shape[0], -1)


def check_weights(layers: Sequence[LayerSpec], weights: Weights) -> None:
    """Verify every trainable layer has W and b of the expected shapes"""
    for index, spec in enumerate(layers):
        expected = param_shapes(spec)
        if not expected:
            continue
        params = weights.get(index)
        if params is None:
            raise ShapeError(index, f"missing weights for {spec.kind} layer")
        for name, shape in expected.items():
            if name not in params or tuple(params[name].shape) != shape:
                got = None if name not in params else list(params[name].shape)
                raise ShapeError(index, f"{name} expected shape {list(shape)}, got {got}")


def conv_windows(x: np.ndarray, spec: LayerSpec) -> np.ndarray:
    """Strided [N, C, OH, OW, kh, kw] view over the zero-padded input"""
    if spec.padding:
        p = spec.padding
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    s = spec.stride
    return sliding_window_view(x, spec.kernel, axis=(2, 3))[:, :, ::s, ::s]


def pool_windows(x: np.ndarray, spec: LayerSpec) -> np.ndarray:
    s = spec.stride
    windows = sliding_window_view(x, (spec.window, spec.window), axis=(2, 3))
    return windows[:, :, ::s, ::s]


def layer_forward(spec: LayerSpec, x: np.ndarray, params: Optional[Dict[str, np.ndarray]]) -> np.ndarray:
    """
    Apply one layer to a batch

    Args:
        spec: Layer specification
        x: Input batch, batch dimension first
        params: {'W', 'b'} for trainable layers, else None

    Returns:
        Output batch in the dtype of x
    """
    kind = spec.kind
    if kind == 'dense':
        return x @ params['W'].T + params['b']
    if kind == 'conv2d':
        windows = conv_windows(x, spec)
        out = np.tensordot(windows, params['W'], axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2) + params['b'][None, :, None, None]
        return np.ascontiguousarray(out)
    if kind == 'relu':
        return np.maximum(x, 0)
    if kind == 'tanh':
        return np.tanh(x)
    if kind == 'sigmoid':
        return expit(x)
    if kind == 'maxpool2d':
        return np.ascontiguousarray(pool_windows(x, spec).max(axis=(4, 5)))
    if kind == 'flatten':
        return x.reshape(x.shape[0], -1)
    if kind == 'softmax':
        return softmax(x, axis=1)
    raise ValueError(f"Unknown layer kind: {kind!r}")


def _forward_chunk(layers: Sequence[LayerSpec], weights: Weights, x: np.ndarray,
                   taps: Iterable[int]) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
    taps = set(taps)
    captured = {}
    for index, spec in enumerate(layers):
        x = layer_forward(spec, x, weights.get(index))
        if index in taps:
            captured[index] = x
    return x, captured


def forward(layers: Sequence[LayerSpec], weights: Weights, batch: np.ndarray,
            taps: Iterable[int] = (), workers: Optional[int] = None,
            chunk_size: int = DEFAULT_CHUNK) -> Tuple[np.ndarray, ActivationTrace]:
    """
    Run the network over a batch and capture the tapped layers

    The batch is cut into fixed chunks that are evaluated independently, so
    the result is bit-identical for any worker count.

    Args:
        layers: Ordered layer specifications
        weights: Layer index -> {'W', 'b'}
        batch: Inputs shaped [batch, *input_shape]
        taps: Layer indices whose outputs are captured
        workers: Thread cap (None = all cores)
        chunk_size: Inputs per independent chunk

    Returns:
        (final layer outputs [batch, classes], ActivationTrace of the taps)

    Raises:
        ShapeError: if the input or weights do not fit the layers
        ValueError: on non-finite input values
    """
    batch = np.asarray(batch)
    if batch.ndim < 2:
        raise ShapeError(0, f"batch must have an explicit leading batch dimension, got shape {list(batch.shape)}")
    taps = sorted(set(taps))
    for tap in taps:
        if not 0 <= tap < len(layers):
            raise ValueError(f"tap layer {tap} outside model with {len(layers)} layers")

    shapes = infer_shapes(layers, batch.shape[1:])
    check_weights(layers, weights)
    if not np.all(np.isfinite(batch)):
        raise ValueError("forward input contains NaN or Inf values")

    n = batch.shape[0]
    batch = batch.astype(np.float32, copy=False)
    cast = {i: {k: v.astype(np.float32, copy=False) for k, v in p.items()} for i, p in weights.items()}

    if n == 0:
        outputs = np.zeros((0,) + shapes[-1], dtype=np.float32)
        empty = {tap: np.zeros((0,) + shapes[tap], dtype=np.float32) for tap in taps}
        return outputs, ActivationTrace(empty)

    ranges = chunk_ranges(n, chunk_size)
    results = parallel_map(lambda r: _forward_chunk(layers, cast, batch[r[0]:r[1]], taps), ranges, workers)

    outputs = np.concatenate([out for out, _ in results], axis=0)
    trace = ActivationTrace({tap: np.concatenate([cap[tap] for _, cap in results], axis=0) for tap in taps})
    return outputs, trace


def class_probabilities(layers: Sequence[LayerSpec], weights: Weights, batch: np.ndarray,
                        workers: Optional[int] = None) -> np.ndarray:
    """Class probabilities, applying softmax when the model ends without one"""
    outputs, _ = forward(layers, weights, batch, workers=workers)
    if layers and layers[-1].kind == 'softmax':
        return outputs
    return softmax(outputs, axis=1)


def predict(layers: Sequence[LayerSpec], weights: Weights, batch: np.ndarray,
            workers: Optional[int] = None) -> np.ndarray:
    """
    Predicted class per batch element

    Ties go to the smallest class index (np.argmax returns the first maximum).
    """
    outputs, _ = forward(layers, weights, batch, workers=workers)
    return np.argmax(outputs, axis=1).astype(np.int64)


def accuracy(layers: Sequence[LayerSpec], weights: Weights, images: np.ndarray,
             labels: np.ndarray, workers: Optional[int] = None) -> float:
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict(layers, weights, images, workers) == labels))
