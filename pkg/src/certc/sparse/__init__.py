"""Generalized block tensors: a dense-equivalent backend that keeps
structure (diagonals, repeats, convolution stencils) explicit."""

from .blocks import (Block, ConstBlock, DenseBlock, DiagonalBlock, KernelBlock,
                     PatchesBlock, RepeatBlock)
from .config import Diagnostics, GLOBAL_DIAGNOSTICS, dense_mode, dense_mode_enabled, set_dense_mode
from .tensor import SparseTensor, densify, normalize
from . import ops

__all__ = [
    "Block", "ConstBlock", "DenseBlock", "DiagonalBlock", "KernelBlock",
    "PatchesBlock", "RepeatBlock", "Diagnostics", "GLOBAL_DIAGNOSTICS",
    "dense_mode", "dense_mode_enabled", "set_dense_mode", "SparseTensor",
    "densify", "normalize", "ops",
]
