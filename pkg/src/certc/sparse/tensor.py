"""The block tensor container: a background value plus placed blocks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .blocks import Block, ConstBlock, DenseBlock, Shape
from . import config


Placed = Tuple[Shape, Block]


def boxes_overlap(s1: Shape, e1: Shape, s2: Shape, e2: Shape) -> bool:
    """Axis-aligned boxes given by start/extent tuples."""
    for a1, n1, a2, n2 in zip(s1, e1, s2, e2):
        if a1 + n1 <= a2 or a2 + n2 <= a1:
            return False
    return True


@dataclass
class SparseTensor:
    shape: Shape
    background: float = 0.0
    blocks: List[Placed] = field(default_factory=list)

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.background = float(self.background)
        norm = []
        for start, blk in self.blocks:
            norm.append((tuple(int(x) for x in start), blk))
        self.blocks = norm

    # -- constructors ------------------------------------------------------

    @classmethod
    def full(cls, shape: Shape, value: float) -> "SparseTensor":
        t = cls(tuple(shape), float(value), [])
        return _maybe_densify(t)

    @classmethod
    def zeros(cls, shape: Shape) -> "SparseTensor":
        return cls.full(shape, 0.0)

    @classmethod
    def dense(cls, arr: np.ndarray) -> "SparseTensor":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(tuple(arr.shape), 0.0, [((0,) * arr.ndim, DenseBlock(arr))])

    @classmethod
    def scalar(cls, value: float) -> "SparseTensor":
        return cls.full((1,), float(value))

    @classmethod
    def from_dense(cls, arr: np.ndarray, background: float | None = None) -> "SparseTensor":
        """Compress a dense array: pick a background, box the rest.

        Value-equal round trip is guaranteed; block structure is the simplest
        one (a single dense block over the bounding box of non-background
        entries).
        """
        arr = np.asarray(arr, dtype=np.float64)
        if background is None:
            vals, counts = np.unique(arr, return_counts=True)
            background = float(vals[np.argmax(counts)]) if vals.size else 0.0
        mask = arr != background
        if background != background:  # NaN background never matches itself
            mask = ~np.isnan(arr)
        if not mask.any():
            return cls(tuple(arr.shape), background, [])
        idx = np.argwhere(mask)
        lo = idx.min(axis=0)
        hi = idx.max(axis=0) + 1
        sl = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
        return cls(tuple(arr.shape), background,
                   [(tuple(int(a) for a in lo), DenseBlock(arr[sl].copy()))])

    # -- materialization ---------------------------------------------------

    def to_dense(self) -> np.ndarray:
        out = np.full(self.shape, self.background, dtype=np.float64)
        for start, blk in self.blocks:
            ext = blk.dense_shape
            sl = tuple(slice(a, a + n) for a, n in zip(start, ext))
            out[sl] = blk.to_dense()
        return out

    # -- bookkeeping -------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.shape)

    def block_extents(self) -> List[Tuple[Shape, Shape]]:
        return [(start, blk.dense_shape) for start, blk in self.blocks]

    def validate(self) -> None:
        """Blocks must sit inside the tensor and be pairwise disjoint."""
        exts = self.block_extents()
        for (start, ext) in exts:
            if len(start) != self.rank:
                raise ValueError("block rank mismatch: %r vs tensor rank %d" % (start, self.rank))
            for a, n, lim in zip(start, ext, self.shape):
                if a < 0 or n < 0 or a + n > lim:
                    raise ValueError("block out of bounds: start=%r extent=%r shape=%r"
                                     % (start, ext, self.shape))
        for i in range(len(exts)):
            for j in range(i + 1, len(exts)):
                s1, e1 = exts[i]
                s2, e2 = exts[j]
                if boxes_overlap(s1, e1, s2, e2):
                    raise ValueError("blocks overlap: %r/%r and %r/%r" % (s1, e1, s2, e2))

    def with_blocks(self, blocks: List[Placed]) -> "SparseTensor":
        return SparseTensor(self.shape, self.background, blocks)

    def is_uniform(self) -> bool:
        return not self.blocks

    def __repr__(self):
        return "SparseTensor(shape=%r, background=%r, blocks=%d)" % (
            self.shape, self.background, len(self.blocks))


def _maybe_densify(t: SparseTensor) -> SparseTensor:
    """In dense mode every tensor is one full dense block."""
    if config.dense_mode_enabled():
        return SparseTensor.dense(t.to_dense())
    return t


def densify(t: SparseTensor) -> SparseTensor:
    return SparseTensor.dense(t.to_dense())


def normalize(t: SparseTensor, diag=None) -> SparseTensor:
    """Apply the dense-mode override and track block statistics."""
    if config.dense_mode_enabled():
        t = SparseTensor.dense(t.to_dense())
    (diag or config.GLOBAL_DIAGNOSTICS).note_tensor(t)
    return t
