"""
Layer specifications and shape inference for sequential classifiers
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

LAYER_KINDS = ('dense', 'conv2d', 'relu', 'tanh', 'sigmoid', 'maxpool2d', 'flatten', 'softmax')
TRAINABLE_KINDS = ('dense', 'conv2d')
ACTIVATION_KINDS = ('relu', 'tanh', 'sigmoid')

Shape = Tuple[int, ...]


class ShapeError(ValueError):
    """Raised when a layer cannot accept its input shape"""

    def __init__(self, layer_index: int, message: str):
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: {message}")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a sequential network and its hyperparameters"""

    kind: str
    in_features: Optional[int] = None
    out_features: Optional[int] = None
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    kernel: Tuple[int, int] = (0, 0)
    stride: int = 1
    padding: int = 0
    window: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"Unknown layer kind: {self.kind!r}")

    @property
    def trainable(self) -> bool:
        return self.kind in TRAINABLE_KINDS

    @classmethod
    def dense(cls, in_features: int, out_features: int) -> 'LayerSpec':
        return cls('dense', in_features=in_features, out_features=out_features)

    @classmethod
    def conv2d(cls, in_channels: int, out_channels: int, kernel: Tuple[int, int],
               stride: int = 1, padding: int = 0) -> 'LayerSpec':
        return cls('conv2d', in_channels=in_channels, out_channels=out_channels,
                   kernel=tuple(kernel), stride=stride, padding=padding)

    @classmethod
    def maxpool2d(cls, window: int, stride: Optional[int] = None) -> 'LayerSpec':
        return cls('maxpool2d', window=window, stride=stride or window)

    def to_dict(self) -> Dict:
        """Manifest representation with a fixed key order per kind"""
        if self.kind == 'dense':
            return {'kind': 'dense', 'in_features': self.in_features, 'out_features': self.out_features}
        if self.kind == 'conv2d':
            return {
                'kind': 'conv2d',
                'in_channels': self.in_channels,
                'out_channels': self.out_channels,
                'kernel': list(self.kernel),
                'stride': self.stride,
                'padding': self.padding,
            }
        if self.kind == 'maxpool2d':
            return {'kind': 'maxpool2d', 'window': self.window, 'stride': self.stride}
        return {'kind': self.kind}

    @classmethod
    def from_dict(cls, data: Dict) -> 'LayerSpec':
        kind = data.get('kind')
        if kind == 'dense':
            return cls.dense(int(data['in_features']), int(data['out_features']))
        if kind == 'conv2d':
            return cls.conv2d(int(data['in_channels']), int(data['out_channels']),
                              tuple(int(v) for v in data['kernel']),
                              int(data.get('stride', 1)), int(data.get('padding', 0)))
        if kind == 'maxpool2d':
            return cls.maxpool2d(int(data['window']), int(data.get('stride', data['window'])))
        return cls(kind)


def _output_shape(index: int, spec: LayerSpec, shape: Shape) -> Shape:
    if spec.kind == 'dense':
        if len(shape) != 1:
            raise ShapeError(index, f"dense expects a flat input, got shape {list(shape)}")
        if shape[0] != spec.in_features:
            raise ShapeError(index, f"dense expects {spec.in_features} features, got {shape[0]}")
        return (spec.out_features,)

    if spec.kind == 'conv2d':
        if len(shape) != 3:
            raise ShapeError(index, f"conv2d expects [c,h,w], got shape {list(shape)}")
        c, h, w = shape
        if c != spec.in_channels:
            raise ShapeError(index, f"conv2d expects {spec.in_channels} channels, got {c}")
        kh, kw = spec.kernel
        if kh < 1 or kw < 1 or spec.stride < 1 or spec.padding < 0:
            raise ShapeError(index, f"invalid conv2d hyperparameters {spec.to_dict()}")
        oh = (h + 2 * spec.padding - kh) // spec.stride + 1
        ow = (w + 2 * spec.padding - kw) // spec.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(index, f"kernel {kh}x{kw} larger than padded input {h}x{w}")
        return (spec.out_channels, oh, ow)

    if spec.kind == 'maxpool2d':
        if len(shape) != 3:
            raise ShapeError(index, f"maxpool2d expects [c,h,w], got shape {list(shape)}")
        c, h, w = shape
        if spec.window < 1 or spec.stride < 1:
            raise ShapeError(index, f"invalid maxpool2d window {spec.window} / stride {spec.stride}")
        oh = (h - spec.window) // spec.stride + 1
        ow = (w - spec.window) // spec.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(index, f"pool window {spec.window} larger than input {h}x{w}")
        return (c, oh, ow)

    if spec.kind == 'flatten':
        size = 1
        for dim in shape:
            size *= dim
        return (size,)

    if spec.kind == 'softmax' and len(shape) != 1:
        raise ShapeError(index, f"softmax expects a flat input, got shape {list(shape)}")

    return tuple(shape)


def infer_shapes(layers: Sequence[LayerSpec], input_shape: Sequence[int]) -> List[Shape]:
    """
    Infer the output shape of every layer (batch dimension excluded)

    Args:
        layers: Ordered layer specifications
        input_shape: Shape of one input element

    Returns:
        One output shape per layer

    Raises:
        ShapeError: naming the first layer whose input shape does not fit
    """
    shape = tuple(int(d) for d in input_shape)
    if not shape or any(d < 1 for d in shape):
        raise ShapeError(0, f"invalid input shape {list(input_shape)}")

    shapes = []
    for index, spec in enumerate(layers):
        shape = _output_shape(index, spec, shape)
        shapes.append(shape)
    return shapes


def neuron_count(shape: Shape) -> int:
    """Number of neurons (scalar outputs) of a layer with this output shape"""
    count = 1
    for dim in shape:
        count *= dim
    return count


def param_shapes(spec: LayerSpec) -> Dict[str, Shape]:
    """Weight and bias shapes of a trainable layer (empty for the rest)"""
    if spec.kind == 'dense':
        return {'W': (spec.out_features, spec.in_features), 'b': (spec.out_features,)}
    if spec.kind == 'conv2d':
        kh, kw = spec.kernel
        return {'W': (spec.out_channels, spec.in_channels, kh, kw), 'b': (spec.out_channels,)}
    return {}


def param_count(spec: LayerSpec) -> int:
    return sum(neuron_count(shape) for shape in param_shapes(spec).values())


def head_layer(layers: Sequence[LayerSpec]) -> int:
    """Index of the classifier head, the last trainable layer"""
    for index in range(len(layers) - 1, -1, -1):
        if layers[index].trainable:
            return index
    raise ValueError("model has no trainable layer to act as classifier head")


def last_encoder_layer(layers: Sequence[LayerSpec]) -> int:
    """Index of the final layer before the classifier head"""
    head = head_layer(layers)
    if head == 0:
        raise ValueError("model has no encoder layer before its classifier head")
    return head - 1


def encoder_layers(layers: Sequence[LayerSpec]) -> List[int]:
    """
    Candidate tap layers for layer sweeps

    Every post-nonlinearity or pooling output before the head, plus the last
    encoder layer, in ascending order.
    """
    last = last_encoder_layer(layers)
    taps = [i for i in range(last) if layers[i].kind in ACTIVATION_KINDS + ('maxpool2d',)]
    taps.append(last)
    return taps
