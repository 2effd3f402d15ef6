"""Feedforward network model: layers, global neuron ids, JSON round-trip."""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


class NetworkError(ValueError):
    pass


@dataclass
class Layer:
    kind: str  # "input" | "affine" | "relu" | "conv"
    size: int
    weight: Optional[np.ndarray] = None  # affine: [size, prev_size], row per neuron
    bias: Optional[np.ndarray] = None  # [size]
    kernel: Optional[np.ndarray] = None  # conv: [out_c, in_c, kh, kw]
    stride: int = 1
    padding: int = 0
    in_shape: Optional[Tuple[int, int, int]] = None  # conv: (c, h, w)
    out_shape: Optional[Tuple[int, int, int]] = None


def conv_output_shape(in_shape: Tuple[int, int, int], out_channels: int,
                      kernel_hw: Tuple[int, int], stride: int,
                      padding: int) -> Tuple[int, int, int]:
    _, h, w = in_shape
    kh, kw = kernel_hw
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise NetworkError("kernel %dx%d does not fit input %dx%d" % (kh, kw, h, w))
    return (out_channels, oh, ow)


def conv_matrix(kernel: np.ndarray, in_shape: Tuple[int, int, int],
                stride: int, padding: int) -> np.ndarray:
    """Unroll a convolution into a dense [out_size, in_size] matrix."""
    out_c, in_c, kh, kw = kernel.shape
    c, h, w = in_shape
    if c != in_c:
        raise NetworkError("kernel expects %d channels, input has %d" % (in_c, c))
    _, oh, ow = conv_output_shape(in_shape, out_c, (kh, kw), stride, padding)
    mat = np.zeros((out_c * oh * ow, c * h * w))
    for co in range(out_c):
        for oy in range(oh):
            for ox in range(ow):
                row = (co * oh + oy) * ow + ox
                for ci in range(in_c):
                    for ky in range(kh):
                        iy = oy * stride - padding + ky
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(kw):
                            ix = ox * stride - padding + kx
                            if ix < 0 or ix >= w:
                                continue
                            col = (ci * h + iy) * w + ix
                            mat[row, col] += kernel[co, ci, ky, kx]
    return mat


@dataclass
class Network:
    layers: List[Layer]
    offsets: List[int] = field(default_factory=list)  # global id of each layer start

    def __post_init__(self):
        if not self.layers or self.layers[0].kind != "input":
            raise NetworkError("first layer must be the input layer")
        off = 0
        self.offsets = []
        prev_size = None
        for i, layer in enumerate(self.layers):
            self.offsets.append(off)
            off += layer.size
            if i == 0:
                prev_size = layer.size
                continue
            if layer.kind == "relu":
                if layer.size != prev_size:
                    raise NetworkError("relu layer %d size %d != previous %d"
                                       % (i, layer.size, prev_size))
            elif layer.kind == "affine":
                if layer.weight is None or layer.weight.shape != (layer.size, prev_size):
                    raise NetworkError("affine layer %d needs weight [%d, %d]"
                                       % (i, layer.size, prev_size))
            elif layer.kind == "conv":
                c, h, w = layer.in_shape
                if c * h * w != prev_size:
                    raise NetworkError("conv layer %d input %r != previous size %d"
                                       % (i, layer.in_shape, prev_size))
            else:
                raise NetworkError("layer %d has unknown kind %r" % (i, layer.kind))
            prev_size = layer.size
        self.num_neurons = off
        self._matrices: Dict[int, np.ndarray] = {}

    @property
    def input_size(self) -> int:
        return self.layers[0].size

    @property
    def output_size(self) -> int:
        return self.layers[-1].size

    def layer_sizes(self) -> List[int]:
        return [layer.size for layer in self.layers]

    def locate(self, nid: int) -> Tuple[int, int]:
        """Global neuron id to (layer index, index within layer)."""
        if nid < 0 or nid >= self.num_neurons:
            raise NetworkError("neuron id %d out of range" % nid)
        k = bisect.bisect_right(self.offsets, nid) - 1
        return k, nid - self.offsets[k]

    def matrix(self, k: int) -> np.ndarray:
        """Dense [size, prev_size] weight matrix of layer k (affine or conv)."""
        layer = self.layers[k]
        if layer.kind == "affine":
            return layer.weight
        if layer.kind == "conv":
            if k not in self._matrices:
                self._matrices[k] = conv_matrix(layer.kernel, layer.in_shape,
                                                layer.stride, layer.padding)
            return self._matrices[k]
        raise NetworkError("layer %d (%s) has no weight matrix" % (k, layer.kind))

    def bias_vector(self, k: int) -> np.ndarray:
        layer = self.layers[k]
        if layer.kind == "affine":
            return layer.bias
        if layer.kind == "conv":
            _, oh, ow = layer.out_shape
            return np.repeat(layer.bias, oh * ow)
        raise NetworkError("layer %d (%s) has no bias" % (k, layer.kind))

    def forward_all(self, x: np.ndarray) -> List[np.ndarray]:
        """Concrete activations per layer; x has shape [..., input_size]."""
        acts = [np.asarray(x, dtype=float)]
        for k, layer in enumerate(self.layers[1:], start=1):
            prev = acts[-1]
            if layer.kind == "relu":
                acts.append(np.maximum(prev, 0.0))
            else:
                acts.append(prev @ self.matrix(k).T + self.bias_vector(k))
        return acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_all(x)[-1]

    def to_json(self) -> dict:
        out = []
        for layer in self.layers:
            if layer.kind == "input":
                out.append({"kind": "input", "size": layer.size})
            elif layer.kind == "relu":
                out.append({"kind": "relu"})
            elif layer.kind == "affine":
                out.append({"kind": "affine", "weight": layer.weight.tolist(),
                            "bias": layer.bias.tolist()})
            else:
                out.append({
                    "kind": "conv", "kernel": layer.kernel.tolist(),
                    "bias": layer.bias.tolist(), "stride": layer.stride,
                    "padding": layer.padding, "in_shape": list(layer.in_shape),
                })
        return {"layers": out}


def network_from_json(data: dict) -> Network:
    if not isinstance(data, dict) or "layers" not in data:
        raise NetworkError("network JSON needs a top-level 'layers' list")
    layers: List[Layer] = []
    prev_size = None
    for i, spec in enumerate(data["layers"]):
        kind = spec.get("kind")
        if kind == "input":
            size = int(spec["size"])
        elif kind == "relu":
            if prev_size is None:
                raise NetworkError("relu layer %d has no predecessor" % i)
            size = prev_size
        elif kind == "affine":
            weight = np.asarray(spec["weight"], dtype=float)
            bias = np.asarray(spec["bias"], dtype=float)
            if weight.ndim != 2 or bias.shape != (weight.shape[0],):
                raise NetworkError("affine layer %d has inconsistent weight/bias" % i)
            layers.append(Layer("affine", weight.shape[0], weight=weight, bias=bias))
            prev_size = weight.shape[0]
            continue
        elif kind == "conv":
            kernel = np.asarray(spec["kernel"], dtype=float)
            bias = np.asarray(spec["bias"], dtype=float)
            if kernel.ndim != 4 or bias.shape != (kernel.shape[0],):
                raise NetworkError("conv layer %d has inconsistent kernel/bias" % i)
            in_shape = tuple(int(v) for v in spec["in_shape"])
            stride = int(spec.get("stride", 1))
            padding = int(spec.get("padding", 0))
            out_shape = conv_output_shape(in_shape, kernel.shape[0],
                                          kernel.shape[2:], stride, padding)
            size = int(np.prod(out_shape))
            layers.append(Layer("conv", size, kernel=kernel, bias=bias,
                                stride=stride, padding=padding,
                                in_shape=in_shape, out_shape=out_shape))
            prev_size = size
            continue
        else:
            raise NetworkError("layer %d has unknown kind %r" % (i, kind))
        layers.append(Layer(kind, size))
        prev_size = size
    return Network(layers)


def load_network(path: str) -> Network:
    with open(path, "r") as fh:
        return network_from_json(json.load(fh))


def save_network(net: Network, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(net.to_json(), fh)


def random_fcn(rng: np.random.Generator, sizes: Sequence[int],
               relu: bool = True) -> Network:
    """Fully connected net over the given sizes; relu between affine layers."""
    if len(sizes) < 2:
        raise NetworkError("need an input size and at least one layer size")
    layers = [Layer("input", int(sizes[0]))]
    for i in range(1, len(sizes)):
        prev, size = int(sizes[i - 1]), int(sizes[i])
        weight = rng.uniform(-1.0, 1.0, size=(size, prev))
        bias = rng.uniform(-1.0, 1.0, size=(size,))
        layers.append(Layer("affine", size, weight=weight, bias=bias))
        if relu and i < len(sizes) - 1:
            layers.append(Layer("relu", size))
    return Network(layers)


def random_cnn(rng: np.random.Generator, in_shape: Tuple[int, int, int],
               convs: Sequence[Tuple[int, int, int, int]],
               head: Sequence[int]) -> Network:
    """Conv stack then a dense head; convs are (out_c, k, stride, padding)."""
    if not convs or not head:
        raise NetworkError("need at least one conv layer and one head size")
    shape = (int(in_shape[0]), int(in_shape[1]), int(in_shape[2]))
    layers = [Layer("input", shape[0] * shape[1] * shape[2])]
    for out_c, k, stride, padding in convs:
        kernel = rng.uniform(-1.0, 1.0, size=(int(out_c), shape[0], int(k), int(k)))
        out_shape = conv_output_shape(shape, int(out_c), (int(k), int(k)),
                                      int(stride), int(padding))
        size = out_shape[0] * out_shape[1] * out_shape[2]
        layers.append(Layer("conv", size, kernel=kernel,
                            bias=rng.uniform(-1.0, 1.0, size=(int(out_c),)),
                            stride=int(stride), padding=int(padding),
                            in_shape=shape, out_shape=out_shape))
        layers.append(Layer("relu", size))
        shape = out_shape
    prev = shape[0] * shape[1] * shape[2]
    for i, size in enumerate(head):
        weight = rng.uniform(-1.0, 1.0, size=(int(size), prev))
        bias = rng.uniform(-1.0, 1.0, size=(int(size),))
        layers.append(Layer("affine", int(size), weight=weight, bias=bias))
        if i < len(head) - 1:
            layers.append(Layer("relu", int(size)))
        prev = int(size)
    return Network(layers)


@dataclass
class InputSpec:
    points: np.ndarray  # [batch, input_size]
    epsilon: float
    labels: Optional[List[int]] = None
    clip01: bool = False

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.epsilon < 0:
            raise NetworkError("epsilon must be nonnegative")
        if self.labels is not None and len(self.labels) != self.points.shape[0]:
            raise NetworkError("one label per input point required")

    @property
    def batch(self) -> int:
        return self.points.shape[0]

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lower = self.points - self.epsilon
        upper = self.points + self.epsilon
        if self.clip01:
            lower = np.clip(lower, 0.0, 1.0)
            upper = np.clip(upper, 0.0, 1.0)
        return lower, upper

    def to_json(self) -> dict:
        out = {"points": self.points.tolist(), "epsilon": self.epsilon,
               "clip01": self.clip01}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out


def input_from_json(data: dict) -> InputSpec:
    if not isinstance(data, dict) or "points" not in data:
        raise NetworkError("input JSON needs 'points'")
    labels = data.get("labels")
    return InputSpec(points=np.asarray(data["points"], dtype=float),
                     epsilon=float(data.get("epsilon", 0.0)),
                     labels=None if labels is None else [int(v) for v in labels],
                     clip01=bool(data.get("clip01", False)))


def load_input(path: str) -> InputSpec:
    with open(path, "r") as fh:
        return input_from_json(json.load(fh))


def save_input(spec: InputSpec, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_json(), fh)
