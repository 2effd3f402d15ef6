"""Network model tests: layout, ids, JSON round-trip, conv unrolling."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.signal import correlate2d

from certc.run import (
    InputSpec,
    Layer,
    Network,
    NetworkError,
    conv_matrix,
    input_from_json,
    network_from_json,
    random_fcn,
)


def small_net() -> Network:
    return Network([
        Layer("input", 2),
        Layer("affine", 3, weight=np.arange(6.0).reshape(3, 2), bias=np.ones(3)),
        Layer("relu", 3),
        Layer("affine", 1, weight=np.array([[1.0, -1.0, 2.0]]), bias=np.zeros(1)),
    ])


class TestLayout:
    def test_offsets_and_locate(self):
        net = small_net()
        assert net.offsets == [0, 2, 5, 8]
        assert net.num_neurons == 9
        assert net.locate(0) == (0, 0)
        assert net.locate(4) == (1, 2)
        assert net.locate(5) == (2, 0)
        assert net.locate(8) == (3, 0)
        with pytest.raises(NetworkError):
            net.locate(9)

    def test_size_validation(self):
        with pytest.raises(NetworkError):
            Network([Layer("input", 2), Layer("relu", 3)])
        with pytest.raises(NetworkError):
            Network([Layer("input", 2),
                     Layer("affine", 3, weight=np.zeros((3, 5)), bias=np.zeros(3))])
        with pytest.raises(NetworkError):
            Network([Layer("affine", 2, weight=np.zeros((2, 2)), bias=np.zeros(2))])

    def test_forward(self):
        net = small_net()
        x = np.array([[1.0, 2.0]])
        acts = net.forward_all(x)
        h = x @ net.layers[1].weight.T + 1.0
        r = np.maximum(h, 0.0)
        assert np.allclose(acts[1], h)
        assert np.allclose(acts[2], r)
        assert np.allclose(net.forward(x), r @ net.layers[3].weight.T)


class TestJson:
    def test_round_trip(self):
        net = small_net()
        again = network_from_json(net.to_json())
        assert again.layer_sizes() == net.layer_sizes()
        x = np.array([[0.3, -0.7], [1.0, 0.5]])
        assert np.allclose(again.forward(x), net.forward(x))

    def test_random_fcn_seeded(self):
        a = random_fcn(np.random.default_rng(3), [4, 8, 2])
        b = random_fcn(np.random.default_rng(3), [4, 8, 2])
        assert [l.kind for l in a.layers] == ["input", "affine", "relu", "affine"]
        assert np.array_equal(a.layers[1].weight, b.layers[1].weight)
        assert (np.abs(a.layers[1].weight) <= 1.0).all()

    def test_bad_json(self):
        with pytest.raises(NetworkError):
            network_from_json({"nope": []})
        with pytest.raises(NetworkError):
            network_from_json({"layers": [{"kind": "relu"}]})


class TestConv:
    def test_matrix_matches_direct_convolution(self):
        rng = np.random.default_rng(11)
        kernel = rng.normal(size=(2, 1, 2, 2))
        img = rng.normal(size=(1, 3, 3))
        mat = conv_matrix(kernel, (1, 3, 3), stride=1, padding=0)
        got = (mat @ img.reshape(-1)).reshape(2, 2, 2)
        for co in range(2):
            want = correlate2d(img[0], kernel[co, 0], mode="valid")
            assert np.allclose(got[co], want)

    def test_padding_and_stride(self):
        rng = np.random.default_rng(12)
        kernel = rng.normal(size=(1, 1, 3, 3))
        img = rng.normal(size=(1, 4, 4))
        mat = conv_matrix(kernel, (1, 4, 4), stride=2, padding=1)
        got = (mat @ img.reshape(-1)).reshape(2, 2)
        padded = np.pad(img[0], 1)
        full = correlate2d(padded, kernel[0, 0], mode="valid")
        assert np.allclose(got, full[::2, ::2])

    def test_conv_layer_in_network(self):
        rng = np.random.default_rng(13)
        kernel = rng.normal(size=(2, 1, 2, 2))
        net = network_from_json({"layers": [
            {"kind": "input", "size": 9},
            {"kind": "conv", "kernel": kernel.tolist(), "bias": [0.5, -0.5],
             "stride": 1, "padding": 0, "in_shape": [1, 3, 3]},
        ]})
        assert net.layers[1].size == 8
        assert net.layers[1].out_shape == (2, 2, 2)
        bias = net.bias_vector(1)
        assert np.allclose(bias, [0.5] * 4 + [-0.5] * 4)
        x = rng.normal(size=(1, 9))
        y = net.forward(x)
        want = (net.matrix(1) @ x[0]) + bias
        assert np.allclose(y[0], want)


class TestInputSpec:
    def test_bounds_and_clip(self):
        spec = InputSpec(points=np.array([[0.05, 0.9]]), epsilon=0.1, clip01=True)
        lower, upper = spec.bounds()
        assert np.allclose(lower, [[0.0, 0.8]])
        assert np.allclose(upper, [[0.15, 1.0]])

    def test_json_round_trip(self):
        spec = InputSpec(points=np.array([[0.1, 0.2]]), epsilon=0.3,
                         labels=[1], clip01=True)
        again = input_from_json(spec.to_json())
        assert np.allclose(again.points, spec.points)
        assert again.epsilon == spec.epsilon
        assert again.labels == [1]
        assert again.clip01 is True

    def test_validation(self):
        with pytest.raises(NetworkError):
            InputSpec(points=np.zeros((1, 2)), epsilon=-0.1)
        with pytest.raises(NetworkError):
            InputSpec(points=np.zeros((2, 2)), epsilon=0.1, labels=[0])
