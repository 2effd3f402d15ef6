"""Independent baselines used to cross-check certifier output."""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from ..run.network import InputSpec, Network, NetworkError


def compose_affine_interval(net: Network, lower: np.ndarray,
                            upper: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Exact per-layer output bounds of an affine-only network over a box.

    Composes the layers into one linear map per depth and evaluates the box
    through each composite by coefficient sign, so every returned interval
    is exact, not an abstraction.
    """
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    n0 = net.input_size
    weight = np.eye(n0)
    bias = np.zeros(n0)
    out = [(lower.copy(), upper.copy())]
    for k, layer in enumerate(net.layers[1:], start=1):
        if layer.kind not in ("affine", "conv"):
            raise NetworkError("layer %d is %s; interval composition needs an "
                               "affine-only network" % (k, layer.kind))
        weight = net.matrix(k) @ weight
        bias = net.matrix(k) @ bias + net.bias_vector(k)
        pos = np.clip(weight, 0.0, None)
        neg = np.clip(weight, None, 0.0)
        lo = lower @ pos.T + upper @ neg.T + bias
        hi = upper @ pos.T + lower @ neg.T + bias
        out.append((lo, hi))
    return out


def sample_envelope(net: Network, spec: InputSpec, rng: np.random.Generator,
                    samples: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Per-layer min/max activations over random points in the input region."""
    lower, upper = spec.bounds()
    u = rng.uniform(size=(samples,) + lower.shape)
    xs = lower + (upper - lower) * u
    acts = net.forward_all(xs)
    return [(a.min(axis=0), a.max(axis=0)) for a in acts]
