"""Runtime values flowing through the tensor IR executor.

Plain Real and Bool results are bare SparseTensors (booleans as 0/1
floats, matching the backend convention).  Expression values pair a
constant tensor with a coefficient tensor whose identifier axis trails
the constant's layout.  Neuron and noise handles never materialize id
arrays: they record which contiguous identifier range they stand for,
and field access or promotion turns the range into gathered tensors or
identity coefficient blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..sparse import DiagonalBlock, SparseTensor, ops


class ExecError(RuntimeError):
    pass


@dataclass
class PairVal:
    """A polyhedral or zonotope expression: coefficients plus constant.

    coeff has shape const.shape + (width,): one coefficient column per
    neuron or noise identifier.  Identifiers absent from the column range
    carry an implicit zero coefficient, which is why widths may be padded
    freely with zeros.
    """

    kind: str  # "PolyExp" | "SymExp"
    coeff: SparseTensor
    const: SparseTensor

    @property
    def width(self) -> int:
        return self.coeff.shape[-1]

    def check(self) -> "PairVal":
        if self.coeff.shape[:-1] != self.const.shape:
            raise ExecError(
                "coefficient layout %r does not extend constant layout %r"
                % (self.coeff.shape, self.const.shape))
        return self


@dataclass
class NeuronsVal:
    """A handle to a contiguous range of neuron or noise identifiers.

    layer is set when the range is exactly one network layer (the curr and
    prev references); a handle with layer None covers every identifier of
    its domain, which is how map and traverse views address coefficient
    columns.
    """

    domain: str  # "neuron" | "noise"
    start: int
    count: int
    layer: Optional[int] = None


@dataclass
class WeightVal:
    """The per-neuron weight rows of one layer, consumed only by dot."""

    layer: int


Value = object  # SparseTensor | PairVal | NeuronsVal | WeightVal


def identity_coeff(prefix: Tuple[int, ...], offset: int, total: int,
                   scale: Optional[np.ndarray] = None) -> SparseTensor:
    """Coefficient tensor [*prefix, total] holding a (scaled) identity.

    Row j of the last prefix axis gets coefficient 1 (or scale[..., j])
    at column offset + j and zero elsewhere.
    """
    n = prefix[-1]
    if offset < 0 or offset + n > total:
        raise ExecError("identity block [%d, %d) exceeds width %d"
                        % (offset, offset + n, total))
    core = np.ones(prefix) if scale is None else np.broadcast_to(
        np.asarray(scale, dtype=float), prefix).copy()
    start = (0,) * len(prefix) + (offset,)
    return SparseTensor(prefix + (total,), 0.0,
                        [(start, DiagonalBlock(core, len(prefix) - 1))])


def pad_width(t: SparseTensor, width: int) -> SparseTensor:
    """Zero-extend the trailing identifier axis of a coefficient tensor."""
    if t.shape[-1] == width:
        return t
    return ops.pad_axis(t, t.rank - 1, width)


def meet_widths(tensors: Sequence[SparseTensor]) -> List[SparseTensor]:
    """Pad coefficient tensors to their common (maximal) trailing width."""
    width = max(t.shape[-1] for t in tensors)
    return [pad_width(t, width) for t in tensors]


def zeros_pair(kind: str, prefix: Tuple[int, ...], width: int) -> PairVal:
    return PairVal(kind, SparseTensor.zeros(prefix + (width,)),
                   SparseTensor.zeros(prefix))
