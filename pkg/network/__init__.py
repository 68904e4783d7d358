"""
Dense/conv sequential networks: layers, forward evaluation and training
"""

from .layers import LayerSpec, ShapeError, infer_shapes, last_encoder_layer, encoder_layers
from .engine import ActivationTrace, forward, predict
from .trainer import TrainConfig, TrainingDivergedError, init_weights, loss_and_grads, train

__all__ = [
    'LayerSpec', 'ShapeError', 'infer_shapes', 'last_encoder_layer', 'encoder_layers',
    'ActivationTrace', 'forward', 'predict',
    'TrainConfig', 'TrainingDivergedError', 'init_weights', 'loss_and_grads', 'train',
]
