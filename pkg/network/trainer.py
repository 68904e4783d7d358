"""
Stochastic gradient trainer for the sequential networks
Softmax cross-entropy loss, backprop through every layer kind, SGD with (Nesterov) momentum
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from network.engine import Weights, accuracy, check_weights, conv_windows, layer_forward, pool_windows
from network.layers import LayerSpec, infer_shapes, neuron_count

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the loss becomes NaN or infinite"""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"training diverged at epoch {epoch}, batch {batch}: loss={loss!r} "
            f"(try a smaller learning rate or momentum)"
        )


@dataclass
class TrainConfig:
    """SGD schedule; lr is multiplied by decay_factor at each epoch in decay_epochs"""

    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.01
    decay_epochs: Tuple[int, ...] = ()
    decay_factor: float = 0.1
    momentum: float = 0.9
    nesterov: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0 or not math.isfinite(self.lr):
            raise ValueError(f"lr must be a finite non-negative number, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.decay_factor <= 0:
            raise ValueError(f"decay_factor must be positive, got {self.decay_factor}")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index"""
        lr = self.lr
        for boundary in self.decay_epochs:
            if epoch >= boundary:
                lr *= self.decay_factor
        return lr

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['decay_epochs'] = list(self.decay_epochs)
        return data


def retrain_config(seed: int = 0) -> TrainConfig:
    """Desk-scale retraining schedule: 10 epochs, lr 0.001 decayed at epochs 5 and 8, Nesterov 0.9"""
    return TrainConfig(epochs=10, batch_size=64, lr=0.001, decay_epochs=(5, 8),
                       decay_factor=0.1, momentum=0.9, nesterov=True, seed=seed)


@dataclass
class TrainResult:
    weights: Weights
    history: List[Dict[str, float]] = field(default_factory=list)


def init_weights(layers: Sequence[LayerSpec], input_shape: Sequence[int], seed: int = 0) -> Weights:
    """
    Xavier-uniform weights, zero biases

    Args:
        layers: Ordered layer specifications
        input_shape: Shape of one input element
        seed: Generator seed; the same seed gives identical bytes

    Returns:
        Layer index -> {'W', 'b'} float32 arrays
    """
    infer_shapes(layers, input_shape)
    rng = np.random.default_rng(seed)
    weights = {}
    for index, spec in enumerate(layers):
        if spec.kind == 'dense':
            fan_in, fan_out = spec.in_features, spec.out_features
            shape = (spec.out_features, spec.in_features)
        elif spec.kind == 'conv2d':
            kh, kw = spec.kernel
            fan_in = spec.in_channels * kh * kw
            fan_out = spec.out_channels * kh * kw
            shape = (spec.out_channels, spec.in_channels, kh, kw)
        else:
            continue
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights[index] = {
            'W': rng.uniform(-limit, limit, size=shape).astype(np.float32),
            'b': np.zeros(shape[0], dtype=np.float32),
        }
    return weights


def _body(layers: Sequence[LayerSpec]) -> Sequence[LayerSpec]:
    """Layers producing the logits (a trailing softmax is fused into the loss)"""
    if layers and layers[-1].kind == 'softmax':
        return layers[:-1]
    return layers


def _layer_backward(spec: LayerSpec, x: np.ndarray, y: np.ndarray, g: np.ndarray,
                    params: Optional[Dict[str, np.ndarray]]) -> Tuple[np.ndarray, Optional[Dict[str, np.ndarray]]]:
    """Gradient w.r.t. the layer input (and parameters) given upstream gradient g"""
    kind = spec.kind

    if kind == 'dense':
        grads = {'W': g.T @ x, 'b': g.sum(axis=0)}
        return g @ params['W'], grads

    if kind == 'conv2d':
        windows = conv_windows(x, spec)
        grads = {
            'W': np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])),
            'b': g.sum(axis=(0, 2, 3)),
        }
        # [N, OH, OW, C, kh, kw]
        dwin = np.tensordot(g, params['W'], axes=([1], [0]))
        p, s = spec.padding, spec.stride
        n, c, h, w = x.shape
        oh, ow = g.shape[2], g.shape[3]
        dx = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=g.dtype)
        kh, kw = spec.kernel
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s] += dwin[..., i, j].transpose(0, 3, 1, 2)
        if p:
            dx = dx[:, :, p:p + h, p:p + w]
        return dx, grads

    if kind == 'maxpool2d':
        windows = pool_windows(x, spec)
        n, c, oh, ow = g.shape
        k, s = spec.window, spec.stride
        winner = windows.reshape(n, c, oh, ow, k * k).argmax(axis=-1)
        dx = np.zeros_like(x)
        for a in range(k * k):
            i, j = divmod(a, k)
            dx[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s] += g * (winner == a)
        return dx, None

    if kind == 'relu':
        return g * (x > 0), None
    if kind == 'tanh':
        return g * (1 - y * y), None
    if kind == 'sigmoid':
        return g * y * (1 - y), None
    if kind == 'flatten':
        return g.reshape(x.shape), None
    if kind == 'softmax':
        return y * (g - np.sum(g * y, axis=1, keepdims=True)), None

    raise ValueError(f"Unknown layer kind: {kind!r}")


def loss_and_grads(layers: Sequence[LayerSpec], weights: Weights, batch: np.ndarray,
                   labels: np.ndarray) -> Tuple[float, Weights]:
    """
    Softmax cross-entropy averaged over the batch and its parameter gradients

    A trailing softmax layer is folded into the loss; otherwise the final
    outputs are treated as logits.

    Args:
        layers: Ordered layer specifications
        weights: Layer index -> {'W', 'b'}
        batch: Inputs [batch, *input_shape] (float32 or float64)
        labels: Integer class per batch element

    Returns:
        (loss, gradients with the same structure as weights)
    """
    batch = np.asarray(batch)
    labels = np.asarray(labels, dtype=np.int64)
    infer_shapes(layers, batch.shape[1:])
    check_weights(layers, weights)
    if batch.shape[0] != labels.shape[0]:
        raise ValueError(f"batch has {batch.shape[0]} inputs but {labels.shape[0]} labels")

    body = _body(layers)
    dtype = batch.dtype if batch.dtype in (np.float32, np.float64) else np.float32
    params = {i: {k: v.astype(dtype, copy=False) for k, v in p.items()} for i, p in weights.items()}

    inputs, outputs = [], []
    x = batch.astype(dtype, copy=False)
    for index, spec in enumerate(body):
        inputs.append(x)
        x = layer_forward(spec, x, params.get(index))
        outputs.append(x)

    n = batch.shape[0]
    rows = np.arange(n)
    loss = float(-np.mean(log_softmax(x, axis=1)[rows, labels]))

    g = softmax(x, axis=1)
    g[rows, labels] -= 1
    g /= n

    grads = {}
    for index in range(len(body) - 1, -1, -1):
        g, layer_grads = _layer_backward(body[index], inputs[index], outputs[index], g, params.get(index))
        if layer_grads is not None:
            grads[index] = layer_grads
    return loss, grads


def train(layers: Sequence[LayerSpec], weights: Weights, images: np.ndarray, labels: np.ndarray,
          config: TrainConfig, eval_set: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> TrainResult:
    """
    Train a copy of the weights with minibatch SGD

    Args:
        layers: Ordered layer specifications
        weights: Initial weights (left untouched)
        images: Training inputs
        labels: Training labels
        config: Schedule and seed
        eval_set: Optional (images, labels) scored after every epoch

    Returns:
        TrainResult with the final weights and one history row per epoch

    Raises:
        TrainingDivergedError: on a non-finite loss
    """
    config.validate()
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    n = images.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")

    params = {i: {k: v.astype(np.float32, copy=True) for k, v in p.items()} for i, p in weights.items()}
    velocity = {i: {k: np.zeros_like(v) for k, v in p.items()} for i, p in params.items()}
    rng = np.random.default_rng(config.seed)
    history = []

    total_params = sum(neuron_count(v.shape) for p in params.values() for v in p.values())
    logger.info(f"Training {total_params} parameters on {n} samples for {config.epochs} epochs")

    for epoch in range(config.epochs):
        lr = np.float32(config.lr_at(epoch))
        mu = np.float32(config.momentum)
        order = rng.permutation(n)
        losses = []

        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(layers, params, images[idx], labels[idx])
            if not math.isfinite(loss):
                logger.error(f"Non-finite loss at epoch {epoch + 1}, batch {batch_index}")
                raise TrainingDivergedError(epoch + 1, batch_index, loss)
            losses.append(loss)

            for i, layer_grads in grads.items():
                for name, grad in layer_grads.items():
                    grad = grad.astype(np.float32, copy=False)
                    v = velocity[i][name]
                    v *= mu
                    v += grad
                    step = grad + mu * v if config.nesterov else v
                    params[i][name] -= lr * step

        row = {'epoch': epoch + 1, 'lr': float(lr), 'loss': float(np.mean(losses))}
        row['train_accuracy'] = accuracy(layers, params, images, labels)
        if eval_set is not None:
            row['eval_accuracy'] = accuracy(layers, params, eval_set[0], eval_set[1])
        history.append(row)
        logger.info(
            f"Epoch {epoch + 1}/{config.epochs}: loss={row['loss']:.4f} "
            f"train_acc={row['train_accuracy']:.4f}"
            + (f" eval_acc={row['eval_accuracy']:.4f}" if 'eval_accuracy' in row else '')
        )

    return TrainResult(weights=params, history=history)
