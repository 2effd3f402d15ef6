"""Block variants for the generalized block-sparse tensor representation.

A tensor is a background value plus a list of non-overlapping blocks.  Each
block knows its dense extent and how to materialize itself; structured
variants (diagonal, constant, repeat, convolution kernel, per-row patches)
keep a compressed core plus the index map that places core entries inside the
block's dense extent.  Entries of the dense extent not in the image of that
map are zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

Shape = Tuple[int, ...]


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Block:
    """Common interface: dense_shape and to_dense()."""

    @property
    def dense_shape(self) -> Shape:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def rank(self) -> int:
        return len(self.dense_shape)


@dataclass
class DenseBlock(Block):
    core: np.ndarray

    def __post_init__(self):
        self.core = _as_array(self.core)

    @property
    def dense_shape(self) -> Shape:
        return tuple(self.core.shape)

    def to_dense(self) -> np.ndarray:
        return np.array(self.core, dtype=np.float64)


@dataclass
class ConstBlock(Block):
    value: float
    shape: Shape

    def __post_init__(self):
        self.value = float(self.value)
        self.shape = tuple(int(s) for s in self.shape)

    @property
    def dense_shape(self) -> Shape:
        return self.shape

    def to_dense(self) -> np.ndarray:
        return np.full(self.shape, self.value, dtype=np.float64)


@dataclass
class DiagonalBlock(Block):
    """Core of rank r embeds into dense rank r+1.

    Dense axes delta and delta+1 are the paired axes: the dense entry at
    index (i_0..i_delta, j, rest) equals core[i_0..i_delta, rest] when
    j == i_delta and zero otherwise.
    """

    core: np.ndarray
    delta: int

    def __post_init__(self):
        self.core = _as_array(self.core)
        assert 0 <= self.delta < self.core.ndim

    @property
    def dense_shape(self) -> Shape:
        s = self.core.shape
        return tuple(s[: self.delta + 1]) + (s[self.delta],) + tuple(s[self.delta + 1 :])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dense_shape, dtype=np.float64)
        n = self.core.shape[self.delta]
        # Build an index expression selecting the diagonal plane.
        idx = [slice(None)] * out.ndim
        for i in range(n):
            idx[self.delta] = i
            idx[self.delta + 1] = i
            core_idx = [slice(None)] * self.core.ndim
            core_idx[self.delta] = i
            out[tuple(idx)] = self.core[tuple(core_idx)]
        return out


@dataclass
class RepeatBlock(Block):
    """np.tile(core, reps); reps entries of 1 leave an axis alone."""

    core: np.ndarray
    reps: Shape

    def __post_init__(self):
        self.core = _as_array(self.core)
        self.reps = tuple(int(r) for r in self.reps)
        assert len(self.reps) == self.core.ndim

    @property
    def dense_shape(self) -> Shape:
        return tuple(s * r for s, r in zip(self.core.shape, self.reps))

    def to_dense(self) -> np.ndarray:
        return np.tile(self.core, self.reps)


def conv_out_hw(in_hw: Tuple[int, int], k_hw: Tuple[int, int],
                stride: Tuple[int, int], padding: Tuple[int, int]) -> Tuple[int, int]:
    oh = (in_hw[0] + 2 * padding[0] - k_hw[0]) // stride[0] + 1
    ow = (in_hw[1] + 2 * padding[1] - k_hw[1]) // stride[1] + 1
    return oh, ow


@dataclass
class KernelBlock(Block):
    """Toeplitz form of a 2-d convolution.

    filt has shape [outC, inC, kh, kw]; the dense extent is
    lead_reps + (outC*oh*ow, inC*ih*iw), row (oc, oy, ox) holding the filter
    for output channel oc scattered at that output position's input window.
    lead_reps tiles the matrix along leading broadcast axes.
    """

    filt: np.ndarray
    stride: Tuple[int, int]
    padding: Tuple[int, int]
    in_geometry: Tuple[int, int, int]  # (inC, ih, iw)
    lead_reps: Shape = ()

    def __post_init__(self):
        self.filt = _as_array(self.filt)
        assert self.filt.ndim == 4
        self.stride = tuple(int(s) for s in self.stride)
        self.padding = tuple(int(p) for p in self.padding)
        self.in_geometry = tuple(int(g) for g in self.in_geometry)
        self.lead_reps = tuple(int(r) for r in self.lead_reps)
        assert self.filt.shape[1] == self.in_geometry[0]

    @property
    def out_geometry(self) -> Tuple[int, int, int]:
        oc = self.filt.shape[0]
        oh, ow = conv_out_hw(self.in_geometry[1:], self.filt.shape[2:],
                             self.stride, self.padding)
        return oc, oh, ow

    @property
    def matrix_shape(self) -> Tuple[int, int]:
        oc, oh, ow = self.out_geometry
        ic, ih, iw = self.in_geometry
        return oc * oh * ow, ic * ih * iw

    @property
    def dense_shape(self) -> Shape:
        return self.lead_reps + self.matrix_shape

    def matrix(self) -> np.ndarray:
        oc, oh, ow = self.out_geometry
        ic, ih, iw = self.in_geometry
        kh, kw = self.filt.shape[2:]
        sy, sx = self.stride
        py, px = self.padding
        out = np.zeros((oc * oh * ow, ic * ih * iw), dtype=np.float64)
        for c in range(oc):
            for oy in range(oh):
                for ox in range(ow):
                    row = (c * oh + oy) * ow + ox
                    for ci in range(ic):
                        for ky in range(kh):
                            y = oy * sy - py + ky
                            if y < 0 or y >= ih:
                                continue
                            for kx in range(kw):
                                x = ox * sx - px + kx
                                if x < 0 or x >= iw:
                                    continue
                                col = (ci * ih + y) * iw + x
                                out[row, col] = self.filt[c, ci, ky, kx]
        return out

    def to_dense(self) -> np.ndarray:
        mat = self.matrix()
        if self.lead_reps:
            mat = np.tile(mat, self.lead_reps + (1, 1))
        return mat


@dataclass
class PatchesBlock(Block):
    """Like KernelBlock, but each matrix row carries its own filter patch.

    patches has shape [rows, inC, kh, kw] with rows == outC*oh*ow; row r's
    values are scattered at the same window positions a KernelBlock would
    use.  Produced by row- or column-scaling a KernelBlock.
    """

    patches: np.ndarray
    stride: Tuple[int, int]
    padding: Tuple[int, int]
    in_geometry: Tuple[int, int, int]
    out_geometry: Tuple[int, int, int]
    lead_reps: Shape = ()

    def __post_init__(self):
        self.patches = _as_array(self.patches)
        assert self.patches.ndim == 4
        self.stride = tuple(int(s) for s in self.stride)
        self.padding = tuple(int(p) for p in self.padding)
        self.in_geometry = tuple(int(g) for g in self.in_geometry)
        self.out_geometry = tuple(int(g) for g in self.out_geometry)
        self.lead_reps = tuple(int(r) for r in self.lead_reps)
        oc, oh, ow = self.out_geometry
        assert self.patches.shape[0] == oc * oh * ow

    @property
    def matrix_shape(self) -> Tuple[int, int]:
        oc, oh, ow = self.out_geometry
        ic, ih, iw = self.in_geometry
        return oc * oh * ow, ic * ih * iw

    @property
    def dense_shape(self) -> Shape:
        return self.lead_reps + self.matrix_shape

    def matrix(self) -> np.ndarray:
        oc, oh, ow = self.out_geometry
        ic, ih, iw = self.in_geometry
        kh, kw = self.patches.shape[2:]
        sy, sx = self.stride
        py, px = self.padding
        out = np.zeros(self.matrix_shape, dtype=np.float64)
        for c in range(oc):
            for oy in range(oh):
                for ox in range(ow):
                    row = (c * oh + oy) * ow + ox
                    for ci in range(ic):
                        for ky in range(kh):
                            y = oy * sy - py + ky
                            if y < 0 or y >= ih:
                                continue
                            for kx in range(kw):
                                x = ox * sx - px + kx
                                if x < 0 or x >= iw:
                                    continue
                                col = (ci * ih + y) * iw + x
                                out[row, col] = self.patches[row, ci, ky, kx]
        return out

    def to_dense(self) -> np.ndarray:
        mat = self.matrix()
        if self.lead_reps:
            mat = np.tile(mat, self.lead_reps + (1, 1))
        return mat
