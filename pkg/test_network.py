"""
Tests for layer shapes, the forward pass and backpropagation
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from network.engine import forward, layer_forward, predict
from network.layers import (LayerSpec, ShapeError, encoder_layers, head_layer, infer_shapes, last_encoder_layer,
                            neuron_count, param_count)
from network.trainer import init_weights, loss_and_grads


def conv_reference(x, W, b, stride, padding):
    """Direct nested-loop convolution"""
    n, c, h, w = x.shape
    out_c, _, kh, kw = W.shape
    x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, out_c, oh, ow))
    for i in range(n):
        for o in range(out_c):
            for r in range(oh):
                for s in range(ow):
                    patch = x[i, :, r * stride:r * stride + kh, s * stride:s * stride + kw]
                    out[i, o, r, s] = np.sum(patch * W[o]) + b[o]
    return out


def double(weights):
    return {i: {k: v.astype(np.float64) for k, v in p.items()} for i, p in weights.items()}


def numeric_grads(layers, weights, batch, labels, eps=1e-6):
    grads = {}
    for index, params in weights.items():
        grads[index] = {}
        for name, value in params.items():
            g = np.zeros_like(value)
            for pos in np.ndindex(value.shape):
                original = value[pos]
                value[pos] = original + eps
                up, _ = loss_and_grads(layers, weights, batch, labels)
                value[pos] = original - eps
                down, _ = loss_and_grads(layers, weights, batch, labels)
                value[pos] = original
                g[pos] = (up - down) / (2 * eps)
            grads[index][name] = g
    return grads


def assert_grads_match(layers, input_shape, batch_size=3, seed=0):
    rng = np.random.default_rng(seed)
    weights = double(init_weights(layers, input_shape, seed))
    for params in weights.values():
        params['b'] += rng.normal(0, 0.1, size=params['b'].shape)
    batch = rng.normal(size=(batch_size,) + tuple(input_shape))
    labels = rng.integers(0, infer_shapes(layers, input_shape)[-1][0], size=batch_size)

    _, analytic = loss_and_grads(layers, weights, batch, labels)
    numeric = numeric_grads(layers, weights, batch, labels)
    for index in weights:
        for name in ('W', 'b'):
            np.testing.assert_allclose(analytic[index][name], numeric[index][name], rtol=1e-5, atol=1e-7)


class TestShapes:
    def test_cnn_shapes(self):
        layers = [LayerSpec.conv2d(1, 4, (3, 3)), LayerSpec('relu'), LayerSpec.maxpool2d(2),
                  LayerSpec('flatten'), LayerSpec.dense(4 * 13 * 13, 10)]
        shapes = infer_shapes(layers, (1, 28, 28))
        assert shapes == [(4, 26, 26), (4, 26, 26), (4, 13, 13), (676,), (10,)]

    def test_dense_mismatch_names_layer(self):
        layers = [LayerSpec.dense(4, 3), LayerSpec('relu'), LayerSpec.dense(5, 2)]
        with pytest.raises(ShapeError) as e:
            infer_shapes(layers, (4,))
        assert e.value.layer_index == 2

    def test_kernel_larger_than_input(self):
        with pytest.raises(ShapeError):
            infer_shapes([LayerSpec.conv2d(1, 1, (5, 5))], (1, 3, 3))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            LayerSpec('dropout')

    def test_param_count_and_neurons(self):
        assert param_count(LayerSpec.dense(2, 3)) == 9
        assert param_count(LayerSpec.conv2d(2, 4, (3, 3))) == 4 * 2 * 9 + 4
        assert param_count(LayerSpec('relu')) == 0
        assert neuron_count((4, 13, 13)) == 676

    def test_encoder_layers(self):
        layers = [LayerSpec.conv2d(1, 2, (3, 3)), LayerSpec('relu'), LayerSpec.maxpool2d(2),
                  LayerSpec('flatten'), LayerSpec.dense(8, 4), LayerSpec('relu'), LayerSpec.dense(4, 2)]
        assert head_layer(layers) == 6
        assert last_encoder_layer(layers) == 5
        assert encoder_layers(layers) == [1, 2, 5]

    def test_layer_dict_round_trip(self):
        for spec in (LayerSpec.dense(3, 2), LayerSpec.conv2d(1, 2, (3, 5), 2, 1), LayerSpec.maxpool2d(2),
                     LayerSpec('tanh')):
            assert LayerSpec.from_dict(spec.to_dict()) == spec

    @given(st.integers(1, 3), st.integers(3, 9), st.integers(1, 3), st.integers(1, 2), st.integers(0, 1))
    def test_forward_matches_inferred_shape(self, channels, size, kernel, stride, padding):
        layers = [LayerSpec.conv2d(channels, 2, (kernel, kernel), stride, padding), LayerSpec('sigmoid')]
        shapes = infer_shapes(layers, (channels, size, size))
        weights = init_weights(layers, (channels, size, size))
        batch = np.zeros((2, channels, size, size), dtype=np.float32)
        outputs, trace = forward(layers, weights, batch, taps=(0,))
        assert outputs.shape[1:] == shapes[-1]
        assert trace[0].shape[1:] == shapes[0]


class TestForward:
    def test_conv_matches_reference(self):
        rng = np.random.default_rng(1)
        for stride, padding in ((1, 0), (2, 1), (1, 2)):
            spec = LayerSpec.conv2d(2, 3, (3, 2), stride, padding)
            x = rng.normal(size=(2, 2, 6, 5))
            W = rng.normal(size=(3, 2, 3, 2))
            b = rng.normal(size=3)
            out = layer_forward(spec, x, {'W': W, 'b': b})
            np.testing.assert_allclose(out, conv_reference(x, W, b, stride, padding), rtol=1e-10)

    def test_maxpool(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        out = layer_forward(LayerSpec.maxpool2d(2), x, None)
        np.testing.assert_array_equal(out[0, 0], [[5, 7], [13, 15]])

    def test_trace_captures_taps(self):
        layers = [LayerSpec.dense(3, 4), LayerSpec('relu'), LayerSpec.dense(4, 2)]
        weights = init_weights(layers, (3,))
        batch = np.ones((5, 3), dtype=np.float32)
        _, trace = forward(layers, weights, batch, taps=(1,))
        assert 1 in trace and 0 not in trace
        assert trace.neurons(1).shape == (5, 4)
        assert np.all(trace[1] >= 0)
        with pytest.raises(KeyError):
            trace[0]

    def test_result_independent_of_workers_and_chunks(self):
        layers = [LayerSpec.conv2d(1, 2, (3, 3)), LayerSpec('relu'), LayerSpec('flatten'), LayerSpec.dense(72, 3)]
        weights = init_weights(layers, (1, 8, 8), seed=3)
        batch = np.random.default_rng(0).random((600, 1, 8, 8)).astype(np.float32)
        reference, _ = forward(layers, weights, batch, workers=1)
        threaded, _ = forward(layers, weights, batch, workers=4)
        assert reference.tobytes() == threaded.tobytes()

    def test_rejects_non_finite_input(self):
        layers = [LayerSpec.dense(2, 2)]
        weights = init_weights(layers, (2,))
        with pytest.raises(ValueError):
            forward(layers, weights, np.array([[np.nan, 0.0]], dtype=np.float32))

    def test_rejects_missing_batch_dimension(self):
        layers = [LayerSpec.dense(2, 2)]
        with pytest.raises(ShapeError):
            forward(layers, init_weights(layers, (2,)), np.zeros(2, dtype=np.float32))

    def test_wrong_weight_shape(self):
        layers = [LayerSpec.dense(2, 2)]
        weights = {0: {'W': np.zeros((3, 2), dtype=np.float32), 'b': np.zeros(2, dtype=np.float32)}}
        with pytest.raises(ShapeError):
            forward(layers, weights, np.zeros((1, 2), dtype=np.float32))

    def test_float64_batches_run_in_float32(self):
        layers = [LayerSpec.dense(2, 3), LayerSpec('tanh')]
        outputs, trace = forward(layers, init_weights(layers, (2,)), np.ones((4, 2)), taps=(0,))
        assert outputs.dtype == np.float32
        assert trace[0].dtype == np.float32

    def test_empty_batch(self):
        layers = [LayerSpec.dense(2, 3)]
        outputs, trace = forward(layers, init_weights(layers, (2,)), np.zeros((0, 2), dtype=np.float32), taps=(0,))
        assert outputs.shape == (0, 3)
        assert trace[0].shape == (0, 3)

    def test_predict_ties_go_to_lowest_class(self):
        layers = [LayerSpec.dense(2, 2)]
        weights = {0: {'W': np.eye(2, dtype=np.float32), 'b': np.zeros(2, dtype=np.float32)}}
        assert predict(layers, weights, np.array([[0.3, 0.3]], dtype=np.float32)).tolist() == [0]


class TestGradients:
    def test_dense_tanh(self):
        assert_grads_match([LayerSpec.dense(4, 3), LayerSpec('tanh'), LayerSpec.dense(3, 2)], (4,))

    def test_sigmoid_softmax_head(self):
        assert_grads_match([LayerSpec.dense(3, 4), LayerSpec('sigmoid'), LayerSpec.dense(4, 3),
                            LayerSpec('softmax')], (3,))

    def test_conv_stride_padding(self):
        assert_grads_match([LayerSpec.conv2d(2, 2, (3, 3), 2, 1), LayerSpec('flatten'),
                            LayerSpec.dense(2 * 3 * 3, 3)], (2, 5, 5), batch_size=2)

    def test_conv_relu_maxpool(self):
        layers = [LayerSpec.conv2d(1, 2, (3, 3)), LayerSpec('relu'), LayerSpec.maxpool2d(2),
                  LayerSpec('flatten'), LayerSpec.dense(2 * 3 * 3, 3)]
        assert_grads_match(layers, (1, 8, 8), batch_size=2, seed=4)

    @pytest.mark.parametrize('seed', range(20))
    def test_composed_mlp_and_cnn_across_seeds(self, seed):
        assert_grads_match([LayerSpec.dense(5, 4), LayerSpec('tanh'), LayerSpec.dense(4, 4), LayerSpec('sigmoid'),
                            LayerSpec.dense(4, 3)], (5,), seed=seed)
        assert_grads_match([LayerSpec.conv2d(1, 2, (3, 3)), LayerSpec('tanh'), LayerSpec.maxpool2d(2),
                            LayerSpec('flatten'), LayerSpec.dense(2 * 2 * 2, 3)], (1, 6, 6), batch_size=2, seed=seed)
