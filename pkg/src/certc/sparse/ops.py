"""Operations over block tensors.

Every operation here has one obligation: produce the same values a dense
implementation would, while keeping block structure where a structured rule
applies and falling back to local densification (with a diagnostics counter)
where it does not.  Elementwise ops never reassociate, so their results are
bitwise equal to the dense reference; matmul/reduce may reorder sums.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import config
from .blocks import (Block, ConstBlock, DenseBlock, DiagonalBlock, KernelBlock,
                     PatchesBlock, RepeatBlock, Shape)
from .tensor import SparseTensor, boxes_overlap, densify, normalize

# ---------------------------------------------------------------------------
# scalar/array op table (booleans are 0/1 floats)

_BINOPS: dict[str, Callable] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.true_divide,
    "max": np.maximum,
    "min": np.minimum,
    "ge": lambda a, b: np.greater_equal(a, b).astype(np.float64),
    "gt": lambda a, b: np.greater(a, b).astype(np.float64),
    "le": lambda a, b: np.less_equal(a, b).astype(np.float64),
    "lt": lambda a, b: np.less(a, b).astype(np.float64),
    "eq": lambda a, b: np.equal(a, b).astype(np.float64),
    "ne": lambda a, b: np.not_equal(a, b).astype(np.float64),
    "and": lambda a, b: ((a != 0) & (b != 0)).astype(np.float64),
    "or": lambda a, b: ((a != 0) | (b != 0)).astype(np.float64),
}

_UNOPS: dict[str, Callable] = {
    "neg": np.negative,
    "not": lambda a: (a == 0).astype(np.float64),
    "abs": np.abs,
}


def apply_binop(op: str, a, b):
    fn = _BINOPS[op]
    with np.errstate(divide="ignore", invalid="ignore"):
        return fn(a, b)


def _diag_of(diag):
    return diag if diag is not None else config.GLOBAL_DIAGNOSTICS


# ---------------------------------------------------------------------------
# box utilities

def _box_intersection(s1, e1, s2, e2):
    lo = tuple(max(a, b) for a, b in zip(s1, s2))
    hi = tuple(min(a + n, b + m) for a, n, b, m in zip(s1, e1, s2, e2))
    if any(h <= l for l, h in zip(lo, hi)):
        return None
    return lo, tuple(h - l for l, h in zip(lo, hi))


def _union_groups(boxes: List[Tuple[Shape, Shape]]) -> List[List[int]]:
    """Group indices whose boxes touch, transitively."""
    n = len(boxes)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if boxes_overlap(boxes[i][0], boxes[i][1], boxes[j][0], boxes[j][1]):
                pi, pj = find(i), find(j)
            else:
                continue
            if pi != pj:
                parent[pi] = pj
    groups: dict[int, List[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _group_regions(boxes: List[Tuple[Shape, Shape]]) -> List[Tuple[Shape, Shape]]:
    """Merge/split heuristic for an overlap group.

    If every box agrees on every axis except at most one, split along that
    axis at all block boundaries; otherwise take the bounding box.
    """
    if len(boxes) == 1:
        return [boxes[0]]
    rank = len(boxes[0][0])
    differing = [ax for ax in range(rank)
                 if len({(s[ax], e[ax]) for s, e in boxes}) > 1]
    if len(differing) <= 1:
        if not differing:
            return [boxes[0]]
        ax = differing[0]
        cuts = sorted({s[ax] for s, e in boxes} | {s[ax] + e[ax] for s, e in boxes})
        base_s, base_e = boxes[0]
        regions = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            covered = any(s[ax] <= lo and s[ax] + e[ax] >= hi for s, e in boxes)
            if not covered:
                continue
            start = list(base_s)
            ext = list(base_e)
            start[ax] = lo
            ext[ax] = hi - lo
            regions.append((tuple(start), tuple(ext)))
        return regions
    lo = tuple(min(s[ax] for s, _ in boxes) for ax in range(rank))
    hi = tuple(max(s[ax] + e[ax] for s, e in boxes) for ax in range(rank))
    return [(lo, tuple(h - l for l, h in zip(lo, hi)))]


def _disjoint_cover(boxes: List[Tuple[Shape, Shape]]) -> List[Tuple[Shape, Shape]]:
    """Pairwise-disjoint regions whose union covers every input box.

    Group overlapping boxes, regionize each group, and repeat: a group's
    bounding box may claim cells of a previously separate group.
    """
    if not boxes:
        return []
    regions = list(boxes)
    for _ in range(100):
        groups = _union_groups(regions)
        if all(len(g) == 1 for g in groups):
            return regions
        nxt: List[Tuple[Shape, Shape]] = []
        for g in groups:
            if len(g) == 1:
                nxt.append(regions[g[0]])
            else:
                nxt.extend(_group_regions([regions[i] for i in g]))
        regions = nxt
    rank = len(boxes[0][0])
    lo = tuple(min(s[ax] for s, _ in boxes) for ax in range(rank))
    hi = tuple(max(s[ax] + e[ax] for s, e in boxes) for ax in range(rank))
    return [(lo, tuple(h - l for l, h in zip(lo, hi)))]


def _paste_patch(patch: np.ndarray, region_start: Shape, start: Shape, blk: Block) -> None:
    """Write blk's dense values into patch (patch covers region_start..)."""
    ext = blk.dense_shape
    inter = _box_intersection(region_start, patch.shape, start, ext)
    if inter is None:
        return
    lo, size = inter
    dst = tuple(slice(l - r, l - r + n) for l, r, n in zip(lo, region_start, size))
    src = tuple(slice(l - s, l - s + n) for l, s, n in zip(lo, start, size))
    patch[dst] = blk.to_dense()[src]


def _assemble(region: Tuple[Shape, Shape], bg: float,
              parts: Sequence[Tuple[Shape, Block]]) -> np.ndarray:
    start, ext = region
    patch = np.full(ext, bg, dtype=np.float64)
    for bstart, blk in parts:
        _paste_patch(patch, start, bstart, blk)
    return patch


def _covers(region: Tuple[Shape, Shape], start: Shape, blk: Block) -> bool:
    rs, re = region
    ext = blk.dense_shape
    return all(a <= r and a + n >= r + m for a, n, r, m in zip(start, ext, rs, re))


def _exact(region: Tuple[Shape, Shape], start: Shape, blk: Block) -> bool:
    return start == region[0] and blk.dense_shape == region[1]


# ---------------------------------------------------------------------------
# structured block x scalar / block x block kernels

def _block_scalar_op(op: str, blk: Block, c: float, blk_is_left: bool) -> Optional[Block]:
    def ap(x):
        return apply_binop(op, x, c) if blk_is_left else apply_binop(op, c, x)

    # identity shortcuts: the block passes through untouched
    if blk_is_left and ((op == "mul" and c == 1.0) or (op in ("add",) and c == 0.0)
                        or (op == "sub" and c == 0.0) or (op == "div" and c == 1.0)):
        return blk
    if not blk_is_left and ((op == "mul" and c == 1.0) or (op == "add" and c == 0.0)):
        return blk

    if isinstance(blk, DenseBlock):
        return DenseBlock(ap(blk.core))
    if isinstance(blk, ConstBlock):
        return ConstBlock(float(ap(np.float64(blk.value))), blk.shape)
    if isinstance(blk, RepeatBlock):
        return RepeatBlock(ap(blk.core), blk.reps)
    # implicit-zero variants keep structure only if the op maps their zeros to zero
    zero_out = float(ap(np.float64(0.0)))
    if zero_out != 0.0:
        return None
    if isinstance(blk, DiagonalBlock):
        return DiagonalBlock(ap(blk.core), blk.delta)
    if isinstance(blk, KernelBlock):
        return KernelBlock(ap(blk.filt), blk.stride, blk.padding, blk.in_geometry,
                           blk.lead_reps)
    if isinstance(blk, PatchesBlock):
        return PatchesBlock(ap(blk.patches), blk.stride, blk.padding, blk.in_geometry,
                            blk.out_geometry, blk.lead_reps)
    return None


def _dense_diag_entries(core: np.ndarray, delta: int) -> np.ndarray:
    """core has paired axes (delta, delta+1) of equal extent; gather the diagonal."""
    n = core.shape[delta]
    take = np.arange(n)
    moved = np.moveaxis(core, (delta, delta + 1), (0, 1))
    gathered = moved[take, take]  # shape (n, rest...)
    return np.moveaxis(gathered, 0, delta)


def _block_block_op(op: str, b1: Block, b2: Block) -> Optional[Block]:
    if b1.dense_shape != b2.dense_shape:
        return None
    if isinstance(b1, ConstBlock):
        return _block_scalar_op(op, b2, b1.value, blk_is_left=False)
    if isinstance(b2, ConstBlock):
        return _block_scalar_op(op, b1, b2.value, blk_is_left=True)
    zero_zero = float(apply_binop(op, np.float64(0.0), np.float64(0.0)))
    if isinstance(b1, DiagonalBlock) and isinstance(b2, DiagonalBlock):
        if b1.delta == b2.delta and zero_zero == 0.0:
            return DiagonalBlock(apply_binop(op, b1.core, b2.core), b1.delta)
        return None
    if op == "mul" and isinstance(b1, DenseBlock) and isinstance(b2, DiagonalBlock):
        entries = _dense_diag_entries(b1.core, b2.delta)
        return DiagonalBlock(entries * b2.core, b2.delta)
    if op == "mul" and isinstance(b1, DiagonalBlock) and isinstance(b2, DenseBlock):
        entries = _dense_diag_entries(b2.core, b1.delta)
        return DiagonalBlock(b1.core * entries, b1.delta)
    if isinstance(b1, RepeatBlock) and isinstance(b2, RepeatBlock):
        if b1.reps == b2.reps and b1.core.shape == b2.core.shape:
            return RepeatBlock(apply_binop(op, b1.core, b2.core), b1.reps)
        return None
    if isinstance(b1, DenseBlock) and isinstance(b2, DenseBlock):
        return DenseBlock(apply_binop(op, b1.core, b2.core))
    return None


# ---------------------------------------------------------------------------
# elementwise binary

def ewise(op: str, a: SparseTensor, b: SparseTensor, diag=None) -> SparseTensor:
    if a.shape != b.shape:
        raise ValueError("ewise shape mismatch: %r vs %r" % (a.shape, b.shape))
    dg = _diag_of(diag)
    new_bg = float(apply_binop(op, np.float64(a.background), np.float64(b.background)))
    if op == "div" and b.background == 0.0:
        dg.div_by_zero += 1

    if config.dense_mode_enabled():
        out = apply_binop(op, a.to_dense(), b.to_dense())
        if op == "div":
            dg.div_by_zero += int(np.count_nonzero(b.to_dense() == 0.0))
        return normalize(SparseTensor.dense(out), dg)

    boxes = [(s, blk.dense_shape) for s, blk in a.blocks + b.blocks]
    out_blocks: List[Tuple[Shape, Block]] = []

    for region in _disjoint_cover(boxes):
        a_parts = [(s, blk) for s, blk in a.blocks
                   if _box_intersection(region[0], region[1], s, blk.dense_shape)]
        b_parts = [(s, blk) for s, blk in b.blocks
                   if _box_intersection(region[0], region[1], s, blk.dense_shape)]
        res: Optional[Block] = None
        # division always takes the dense path so zero divisors are counted exactly
        if op != "div":
            if (len(a_parts) == 1 and len(b_parts) == 1
                    and _exact(region, *a_parts[0]) and _exact(region, *b_parts[0])):
                res = _block_block_op(op, a_parts[0][1], b_parts[0][1])
            if res is None and len(a_parts) == 1 and not b_parts and _exact(region, *a_parts[0]):
                res = _block_scalar_op(op, a_parts[0][1], b.background, blk_is_left=True)
            if res is None and len(b_parts) == 1 and not a_parts and _exact(region, *b_parts[0]):
                res = _block_scalar_op(op, b_parts[0][1], a.background, blk_is_left=False)
        if res is None:
            pa = _assemble(region, a.background, a_parts)
            pb = _assemble(region, b.background, b_parts)
            if op == "div":
                dg.div_by_zero += int(np.count_nonzero(pb == 0.0))
            vals = apply_binop(op, pa, pb)
            if np.all(vals == new_bg):
                continue
            res = DenseBlock(vals)
            dg.densify_fallbacks += 1
        if isinstance(res, ConstBlock) and res.value == new_bg:
            continue
        out_blocks.append((region[0], res))

    return normalize(SparseTensor(a.shape, new_bg, out_blocks), dg)


# ---------------------------------------------------------------------------
# unary / clamp / select

def unary(op: str, t: SparseTensor, diag=None) -> SparseTensor:
    dg = _diag_of(diag)
    fn = _UNOPS[op]
    new_bg = float(fn(np.float64(t.background)))
    zero_safe = float(fn(np.float64(0.0))) == 0.0
    out_blocks: List[Tuple[Shape, Block]] = []
    for start, blk in t.blocks:
        if isinstance(blk, DenseBlock):
            out_blocks.append((start, DenseBlock(fn(blk.core))))
        elif isinstance(blk, ConstBlock):
            out_blocks.append((start, ConstBlock(float(fn(np.float64(blk.value))), blk.shape)))
        elif isinstance(blk, RepeatBlock):
            out_blocks.append((start, RepeatBlock(fn(blk.core), blk.reps)))
        elif zero_safe and isinstance(blk, DiagonalBlock):
            out_blocks.append((start, DiagonalBlock(fn(blk.core), blk.delta)))
        elif zero_safe and isinstance(blk, KernelBlock):
            out_blocks.append((start, KernelBlock(fn(blk.filt), blk.stride, blk.padding,
                                                  blk.in_geometry, blk.lead_reps)))
        elif zero_safe and isinstance(blk, PatchesBlock):
            out_blocks.append((start, PatchesBlock(fn(blk.patches), blk.stride, blk.padding,
                                                   blk.in_geometry, blk.out_geometry,
                                                   blk.lead_reps)))
        else:
            dg.densify_fallbacks += 1
            out_blocks.append((start, DenseBlock(fn(blk.to_dense()))))
    return normalize(SparseTensor(t.shape, new_bg, out_blocks), dg)


def clamp(t: SparseTensor, lo: float | None = None, hi: float | None = None,
          diag=None) -> SparseTensor:
    dg = _diag_of(diag)

    def fn(x):
        return np.clip(x, lo, hi)

    new_bg = float(fn(np.float64(t.background)))
    zero_safe = float(fn(np.float64(0.0))) == 0.0
    out_blocks: List[Tuple[Shape, Block]] = []
    for start, blk in t.blocks:
        if isinstance(blk, DenseBlock):
            out_blocks.append((start, DenseBlock(fn(blk.core))))
        elif isinstance(blk, ConstBlock):
            out_blocks.append((start, ConstBlock(float(fn(np.float64(blk.value))), blk.shape)))
        elif isinstance(blk, RepeatBlock):
            out_blocks.append((start, RepeatBlock(fn(blk.core), blk.reps)))
        elif zero_safe and isinstance(blk, DiagonalBlock):
            out_blocks.append((start, DiagonalBlock(fn(blk.core), blk.delta)))
        elif zero_safe and isinstance(blk, KernelBlock):
            out_blocks.append((start, KernelBlock(fn(blk.filt), blk.stride, blk.padding,
                                                  blk.in_geometry, blk.lead_reps)))
        elif zero_safe and isinstance(blk, PatchesBlock):
            out_blocks.append((start, PatchesBlock(fn(blk.patches), blk.stride, blk.padding,
                                                   blk.in_geometry, blk.out_geometry,
                                                   blk.lead_reps)))
        else:
            dg.densify_fallbacks += 1
            out_blocks.append((start, DenseBlock(fn(blk.to_dense()))))
    return normalize(SparseTensor(t.shape, new_bg, out_blocks), dg)


def select(cond: SparseTensor, a: SparseTensor, b: SparseTensor, diag=None) -> SparseTensor:
    """Elementwise cond ? a : b.  A true where: losing-lane values never leak."""
    if not (cond.shape == a.shape == b.shape):
        raise ValueError("select shape mismatch: %r %r %r" % (cond.shape, a.shape, b.shape))
    dg = _diag_of(diag)
    if cond.is_uniform():
        return a if cond.background != 0.0 else b
    if config.dense_mode_enabled():
        out = np.where(cond.to_dense() != 0.0, a.to_dense(), b.to_dense())
        return normalize(SparseTensor.dense(out), dg)

    boxes = [(s, blk.dense_shape) for s, blk in cond.blocks + a.blocks + b.blocks]
    bg_pick = a.background if cond.background != 0.0 else b.background
    out_blocks: List[Tuple[Shape, Block]] = []
    for region in _disjoint_cover(boxes):
        parts = {}
        for side, src in ((0, cond), (1, a), (2, b)):
            parts[side] = [(s, blk) for s, blk in src.blocks
                           if _box_intersection(region[0], region[1], s, blk.dense_shape)]
        cpatch = _assemble(region, cond.background, parts[0])
        if np.all(cpatch != 0.0) or np.all(cpatch == 0.0):
            winner, wparts = (a, parts[1]) if cpatch.flat[0] != 0.0 else (b, parts[2])
            if len(wparts) == 1 and _exact(region, *wparts[0]):
                out_blocks.append((region[0], wparts[0][1]))
                continue
            vals = _assemble(region, winner.background, wparts)
        else:
            pa = _assemble(region, a.background, parts[1])
            pb = _assemble(region, b.background, parts[2])
            vals = np.where(cpatch != 0.0, pa, pb)
        if np.all(vals == bg_pick):
            continue
        out_blocks.append((region[0], DenseBlock(vals)))
    # regions outside every block: cond == cond.background everywhere there
    return normalize(SparseTensor(a.shape, bg_pick, out_blocks), dg)


# ---------------------------------------------------------------------------
# shape ops

def add_dim(t: SparseTensor, axis: int, diag=None) -> SparseTensor:
    dg = _diag_of(diag)
    shape = t.shape[:axis] + (1,) + t.shape[axis:]
    out_blocks: List[Tuple[Shape, Block]] = []
    for start, blk in t.blocks:
        nstart = start[:axis] + (0,) + start[axis:]
        nblk = _block_add_dim(blk, axis, dg)
        out_blocks.append((nstart, nblk))
    return normalize(SparseTensor(shape, t.background, out_blocks), dg)


def _block_add_dim(blk: Block, axis: int, dg) -> Block:
    if isinstance(blk, DenseBlock):
        return DenseBlock(np.expand_dims(blk.core, axis))
    if isinstance(blk, ConstBlock):
        return ConstBlock(blk.value, blk.shape[:axis] + (1,) + blk.shape[axis:])
    if isinstance(blk, RepeatBlock):
        return RepeatBlock(np.expand_dims(blk.core, axis),
                           blk.reps[:axis] + (1,) + blk.reps[axis:])
    if isinstance(blk, DiagonalBlock):
        if axis <= blk.delta:
            return DiagonalBlock(np.expand_dims(blk.core, axis), blk.delta + 1)
        if axis >= blk.delta + 2:
            return DiagonalBlock(np.expand_dims(blk.core, axis - 1), blk.delta)
        dg.densify_fallbacks += 1
        return DenseBlock(np.expand_dims(blk.to_dense(), axis))
    if isinstance(blk, (KernelBlock, PatchesBlock)):
        nlead = len(blk.lead_reps)
        if axis <= nlead:
            reps = blk.lead_reps[:axis] + (1,) + blk.lead_reps[axis:]
            if isinstance(blk, KernelBlock):
                return KernelBlock(blk.filt, blk.stride, blk.padding, blk.in_geometry, reps)
            return PatchesBlock(blk.patches, blk.stride, blk.padding, blk.in_geometry,
                                blk.out_geometry, reps)
        dg.densify_fallbacks += 1
        return DenseBlock(np.expand_dims(blk.to_dense(), axis))
    raise TypeError(type(blk))


def remove_dim(t: SparseTensor, axis: int, diag=None) -> SparseTensor:
    if t.shape[axis] != 1:
        raise ValueError("remove_dim on axis of extent %d" % t.shape[axis])
    dg = _diag_of(diag)
    shape = t.shape[:axis] + t.shape[axis + 1:]
    out_blocks: List[Tuple[Shape, Block]] = []
    for start, blk in t.blocks:
        nstart = start[:axis] + start[axis + 1:]
        out_blocks.append((nstart, _block_remove_dim(blk, axis, dg)))
    return normalize(SparseTensor(shape, t.background, out_blocks), dg)


def _block_remove_dim(blk: Block, axis: int, dg) -> Block:
    if isinstance(blk, DenseBlock):
        return DenseBlock(np.squeeze(blk.core, axis))
    if isinstance(blk, ConstBlock):
        return ConstBlock(blk.value, blk.shape[:axis] + blk.shape[axis + 1:])
    if isinstance(blk, RepeatBlock):
        return RepeatBlock(np.squeeze(blk.core, axis),
                           blk.reps[:axis] + blk.reps[axis + 1:])
    if isinstance(blk, DiagonalBlock):
        if axis < blk.delta:
            return DiagonalBlock(np.squeeze(blk.core, axis), blk.delta - 1)
        if axis > blk.delta + 1:
            return DiagonalBlock(np.squeeze(blk.core, axis - 1), blk.delta)
        dg.densify_fallbacks += 1
        return DenseBlock(np.squeeze(blk.to_dense(), axis))
    if isinstance(blk, (KernelBlock, PatchesBlock)):
        nlead = len(blk.lead_reps)
        if axis < nlead:
            reps = blk.lead_reps[:axis] + blk.lead_reps[axis + 1:]
            if isinstance(blk, KernelBlock):
                return KernelBlock(blk.filt, blk.stride, blk.padding, blk.in_geometry, reps)
            return PatchesBlock(blk.patches, blk.stride, blk.padding, blk.in_geometry,
                                blk.out_geometry, reps)
        dg.densify_fallbacks += 1
        return DenseBlock(np.squeeze(blk.to_dense(), axis))
    raise TypeError(type(blk))


def repeat(t: SparseTensor, axis: int, k: int, diag=None) -> SparseTensor:
    """Tile the tensor k times along axis (whole-extent repetition)."""
    if k == 1:
        return t
    dg = _diag_of(diag)
    old_n = t.shape[axis]
    shape = t.shape[:axis] + (old_n * k,) + t.shape[axis + 1:]
    if config.dense_mode_enabled():
        reps = [1] * t.rank
        reps[axis] = k
        return normalize(SparseTensor.dense(np.tile(t.to_dense(), reps)), dg)
    out_blocks: List[Tuple[Shape, Block]] = []
    for start, blk in t.blocks:
        full_span = start[axis] == 0 and blk.dense_shape[axis] == old_n
        wrapped = _block_repeat(blk, axis, k) if full_span else None
        if wrapped is not None:
            out_blocks.append((start, wrapped))
            continue
        for i in range(k):
            nstart = list(start)
            nstart[axis] = start[axis] + i * old_n
            out_blocks.append((tuple(nstart), blk))
    return normalize(SparseTensor(shape, t.background, out_blocks), dg)


def _block_repeat(blk: Block, axis: int, k: int) -> Optional[Block]:
    if isinstance(blk, DenseBlock):
        reps = [1] * blk.core.ndim
        reps[axis] = k
        return RepeatBlock(blk.core, tuple(reps))
    if isinstance(blk, ConstBlock):
        shape = list(blk.shape)
        shape[axis] *= k
        return ConstBlock(blk.value, tuple(shape))
    if isinstance(blk, RepeatBlock):
        reps = list(blk.reps)
        reps[axis] *= k
        return RepeatBlock(blk.core, tuple(reps))
    if isinstance(blk, DiagonalBlock):
        if axis in (blk.delta, blk.delta + 1):
            return None  # tiling a paired axis breaks diagonality
        core_axis = axis if axis <= blk.delta else axis - 1
        reps = [1] * blk.core.ndim
        reps[core_axis] = k
        return DiagonalBlock(np.tile(blk.core, reps), blk.delta)
    if isinstance(blk, (KernelBlock, PatchesBlock)):
        if axis < len(blk.lead_reps):
            reps = list(blk.lead_reps)
            reps[axis] *= k
            if isinstance(blk, KernelBlock):
                return KernelBlock(blk.filt, blk.stride, blk.padding, blk.in_geometry,
                                   tuple(reps))
            return PatchesBlock(blk.patches, blk.stride, blk.padding, blk.in_geometry,
                                blk.out_geometry, tuple(reps))
        return None
    return None


def pad_axis(t: SparseTensor, axis: int, new_extent: int) -> SparseTensor:
    """Grow an axis; new cells take the background value."""
    if new_extent < t.shape[axis]:
        raise ValueError("pad_axis cannot shrink")
    if new_extent == t.shape[axis]:
        return t
    shape = t.shape[:axis] + (new_extent,) + t.shape[axis + 1:]
    out = SparseTensor(shape, t.background, list(t.blocks))
    if config.dense_mode_enabled():
        return densify(out)
    return out


def concat(ts: Sequence[SparseTensor], axis: int, diag=None) -> SparseTensor:
    dg = _diag_of(diag)
    assert ts
    bg = ts[0].background
    rank = ts[0].rank
    for t in ts:
        if t.rank != rank:
            raise ValueError("concat rank mismatch")
    total = sum(t.shape[axis] for t in ts)
    shape = list(ts[0].shape)
    shape[axis] = total
    out_blocks: List[Tuple[Shape, Block]] = []
    off = 0
    for t in ts:
        src = t
        if t.background != bg:
            dg.densify_fallbacks += 1
            src = SparseTensor(t.shape, bg, [((0,) * rank, DenseBlock(t.to_dense()))])
        for start, blk in src.blocks:
            nstart = list(start)
            nstart[axis] += off
            out_blocks.append((tuple(nstart), blk))
        off += t.shape[axis]
    return normalize(SparseTensor(tuple(shape), bg, out_blocks), dg)


# ---------------------------------------------------------------------------
# reduce

def reduce(t: SparseTensor, axis: int, op: str = "sum", diag=None) -> SparseTensor:
    dg = _diag_of(diag)
    out_shape = t.shape[:axis] + t.shape[axis + 1:]
    if op in ("max", "min"):
        arr = t.to_dense()
        red = arr.max(axis=axis) if op == "max" else arr.min(axis=axis)
        return normalize(SparseTensor.from_dense(red), dg)
    if op != "sum":
        raise ValueError("unknown reduce op %r" % op)
    if config.dense_mode_enabled() or t.background != 0.0:
        if t.background != 0.0:
            dg.densify_fallbacks += 1
        return normalize(SparseTensor.from_dense(t.to_dense().sum(axis=axis),
                                                 background=0.0), dg)
    pieces: List[Tuple[Shape, Block]] = []
    for start, blk in t.blocks:
        nstart = start[:axis] + start[axis + 1:]
        pieces.append((nstart, _block_reduce_sum(blk, axis, dg)))
    return normalize(_accumulate(out_shape, pieces), dg)


def _block_reduce_sum(blk: Block, axis: int, dg) -> Block:
    if isinstance(blk, DenseBlock):
        return DenseBlock(blk.core.sum(axis=axis))
    if isinstance(blk, ConstBlock):
        return ConstBlock(blk.value * blk.shape[axis],
                          blk.shape[:axis] + blk.shape[axis + 1:])
    if isinstance(blk, RepeatBlock):
        core = blk.core.sum(axis=axis) * blk.reps[axis]
        return RepeatBlock(core, blk.reps[:axis] + blk.reps[axis + 1:])
    if isinstance(blk, DiagonalBlock):
        if axis in (blk.delta, blk.delta + 1):
            return DenseBlock(blk.core)  # the diagonal collapses onto its core
        core_axis = axis if axis < blk.delta else axis - 1
        return DiagonalBlock(blk.core.sum(axis=core_axis),
                             blk.delta if axis > blk.delta else blk.delta - 1)
    dg.densify_fallbacks += 1
    return DenseBlock(blk.to_dense().sum(axis=axis))


def _accumulate(shape: Shape, pieces: List[Tuple[Shape, Block]]) -> SparseTensor:
    """Sum possibly-overlapping placed pieces over a zero background."""
    boxes = [(s, blk.dense_shape) for s, blk in pieces]
    out_blocks: List[Tuple[Shape, Block]] = []
    for region in _disjoint_cover(boxes):
        parts = [(s, blk) for s, blk in pieces
                 if _box_intersection(region[0], region[1], s, blk.dense_shape)]
        if len(parts) == 1 and _exact(region, *parts[0]):
            out_blocks.append(parts[0])
            continue
        start, ext = region
        acc = np.zeros(ext, dtype=np.float64)
        for s, blk in parts:
            inter = _box_intersection(start, ext, s, blk.dense_shape)
            if inter is None:
                continue
            lo, size = inter
            dst = tuple(slice(l - r, l - r + n) for l, r, n in zip(lo, start, size))
            src = tuple(slice(l - s0, l - s0 + n) for l, s0, n in zip(lo, s, size))
            acc[dst] += blk.to_dense()[src]
        out_blocks.append((start, DenseBlock(acc)))
    return SparseTensor(shape, 0.0, out_blocks)


# ---------------------------------------------------------------------------
# matmul: contract t1's last axis with t2's second-to-last, leading axes batch

def matmul(t1: SparseTensor, t2: SparseTensor, diag=None) -> SparseTensor:
    dg = _diag_of(diag)
    if t1.rank < 2 or t2.rank < 2 or t1.rank != t2.rank:
        raise ValueError("matmul rank mismatch: %r vs %r" % (t1.shape, t2.shape))
    if t1.shape[-1] != t2.shape[-2]:
        raise ValueError("matmul inner dim mismatch: %r vs %r" % (t1.shape, t2.shape))
    lead = []
    for x, y in zip(t1.shape[:-2], t2.shape[:-2]):
        if x != y and 1 not in (x, y):
            raise ValueError("matmul lead dim mismatch: %r vs %r" % (t1.shape, t2.shape))
        lead.append(max(x, y))
    out_shape = tuple(lead) + (t1.shape[-2], t2.shape[-1])

    if config.dense_mode_enabled() or t1.background != 0.0 or t2.background != 0.0:
        if t1.background != 0.0 or t2.background != 0.0:
            dg.densify_fallbacks += 1
        a = t1.to_dense()
        b = t2.to_dense()
        out = np.einsum("...mj,...jk->...mk", a, b)
        return normalize(SparseTensor.dense(out), dg)

    nlead = len(lead)
    pieces: List[Tuple[Shape, Block]] = []
    for s1, b1 in t1.blocks:
        for s2, b2 in t2.blocks:
            piece = _mm_pair(s1, b1, s2, b2, t1.shape, t2.shape, nlead, dg)
            if piece is not None:
                pieces.append(piece)
    return normalize(_accumulate(out_shape, pieces), dg)


def _lead_result(s1, e1, s2, e2, shape1, shape2, nlead):
    """Output interval per lead axis under broadcast; None if incompatible."""
    start, ext = [], []
    for ax in range(nlead):
        a_br = shape1[ax] == 1
        b_br = shape2[ax] == 1
        if a_br and b_br:
            lo, n = 0, 1
        elif a_br:
            lo, n = s2[ax], e2[ax]
        elif b_br:
            lo, n = s1[ax], e1[ax]
        else:
            lo = max(s1[ax], s2[ax])
            hi = min(s1[ax] + e1[ax], s2[ax] + e2[ax])
            if hi <= lo:
                return None
            n = hi - lo
        start.append(lo)
        ext.append(n)
    return tuple(start), tuple(ext)


def _mm_normalize(blk: Block, nlead: int):
    """View a block as ('dense', core) / ('diag', core) / ('const', v) /
    ('kernel', blk) / ('patches', blk) for the matmul kernels, where cores keep
    broadcastable lead axes.  Returns None if not normalizable."""
    if isinstance(blk, DenseBlock):
        return ("dense", blk.core)
    if isinstance(blk, ConstBlock):
        return ("const", blk.value)
    if isinstance(blk, RepeatBlock):
        # lead-only tiling of a core with singleton lead extents broadcasts in einsum
        if all(r == 1 for r in blk.reps[-2:]) and all(
                blk.core.shape[ax] == 1 or blk.reps[ax] == 1 for ax in range(nlead)):
            return ("dense", blk.core)
        return None
    if isinstance(blk, DiagonalBlock):
        if blk.delta == blk.core.ndim - 1:  # paired axes are the trailing two
            return ("diag", blk.core)
        return None
    if isinstance(blk, KernelBlock):
        return ("kernel", blk)
    if isinstance(blk, PatchesBlock):
        return ("patches", blk)
    return None


def _mm_pair(s1, b1, s2, b2, shape1, shape2, nlead, dg):
    e1, e2 = b1.dense_shape, b2.dense_shape
    j_lo = max(s1[-1], s2[-2])
    j_hi = min(s1[-1] + e1[-1], s2[-2] + e2[-2])
    if j_hi <= j_lo:
        return None
    lead = _lead_result(s1[:-2] or (), e1[:-2] or (), s2[:-2] or (), e2[:-2] or (),
                        shape1, shape2, nlead)
    if lead is None:
        return None
    lead_start, lead_ext = lead

    n1 = _mm_normalize(b1, nlead)
    n2 = _mm_normalize(b2, nlead)

    def clip_lead(core, s, lead_rank):
        """Slice a core's lead axes down to the result interval (broadcast-aware)."""
        sl = []
        for ax in range(lead_rank):
            if core.shape[ax] == 1:
                sl.append(slice(0, 1))
            else:
                sl.append(slice(lead_start[ax] - s[ax], lead_start[ax] - s[ax] + lead_ext[ax]))
        return core[tuple(sl)] if sl else core

    out_start = tuple(lead_start) + (s1[-2], s2[-1])

    if n1 is not None and n2 is not None:
        k1, v1 = n1
        k2, v2 = n2
        if k1 == "dense" and k2 == "dense":
            a = clip_lead(v1, s1[:-2], nlead)[..., :, j_lo - s1[-1]: j_hi - s1[-1]]
            b = clip_lead(v2, s2[:-2], nlead)[..., j_lo - s2[-2]: j_hi - s2[-2], :]
            out = np.einsum("...mj,...jk->...mk", a, b)
            out = np.broadcast_to(out, tuple(lead_ext) + out.shape[-2:]).copy()
            return (out_start, DenseBlock(out))
        if k1 == "diag" and k2 == "dense":
            # rows of b scaled by the diagonal; output rows follow the j window
            i_lo = j_lo - s1[-1]
            i_hi = j_hi - s1[-1]
            core = clip_lead(v1, s1[:-2], nlead)[..., i_lo:i_hi]
            b = clip_lead(v2, s2[:-2], nlead)[..., j_lo - s2[-2]: j_hi - s2[-2], :]
            out = core[..., :, None] * b
            out = np.broadcast_to(out, tuple(lead_ext) + out.shape[-2:]).copy()
            start = tuple(lead_start) + (s1[-2] + i_lo, s2[-1])
            return (start, DenseBlock(out))
        if k1 == "dense" and k2 == "diag":
            i_lo = j_lo - s2[-2]
            i_hi = j_hi - s2[-2]
            core = clip_lead(v2, s2[:-2], nlead)[..., i_lo:i_hi]
            a = clip_lead(v1, s1[:-2], nlead)[..., :, j_lo - s1[-1]: j_hi - s1[-1]]
            out = a * core[..., None, :]
            out = np.broadcast_to(out, tuple(lead_ext) + out.shape[-2:]).copy()
            start = tuple(lead_start) + (s1[-2], s2[-1] + i_lo)
            return (start, DenseBlock(out))
        if k1 == "diag" and k2 == "diag":
            i1_lo = j_lo - s1[-1]
            i2_lo = j_lo - s2[-2]
            n = j_hi - j_lo
            c1 = clip_lead(v1, s1[:-2], nlead)[..., i1_lo:i1_lo + n]
            c2 = clip_lead(v2, s2[:-2], nlead)[..., i2_lo:i2_lo + n]
            core = c1 * c2
            core = np.broadcast_to(core, tuple(lead_ext) + core.shape[-1:]).copy()
            start = tuple(lead_start) + (s1[-2] + i1_lo, s2[-1] + i2_lo)
            return (start, DiagonalBlock(core, core.ndim - 1))
        if k1 == "const" and k2 == "dense":
            b = clip_lead(v2, s2[:-2], nlead)[..., j_lo - s2[-2]: j_hi - s2[-2], :]
            row = v1 * b.sum(axis=-2, keepdims=True)
            row = np.broadcast_to(row, tuple(lead_ext) + row.shape[-2:]).copy()
            reps = (1,) * len(lead_ext) + (e1[-2], 1)
            return (out_start, RepeatBlock(row, reps))
        if k1 == "dense" and k2 == "const":
            a = clip_lead(v1, s1[:-2], nlead)[..., :, j_lo - s1[-1]: j_hi - s1[-1]]
            col = v2 * a.sum(axis=-1, keepdims=True)
            col = np.broadcast_to(col, tuple(lead_ext) + col.shape[-2:]).copy()
            reps = (1,) * len(lead_ext) + (1, e2[-1])
            return (out_start, RepeatBlock(col, reps))
        if k1 == "const" and k2 == "const":
            val = v1 * v2 * (j_hi - j_lo)
            return (out_start, ConstBlock(val, tuple(lead_ext) + (e1[-2], e2[-1])))
        res = None
        if k1 == "diag" and k2 == "kernel" and _kernel_full_window(s1, e1, s2, b2, j_lo, j_hi):
            res = _mm_diag_kernel(s1, v1, s2, b2, lead_start, lead_ext, nlead)
        elif k1 == "dense" and k2 == "kernel" and _kernel_full_window(s1, e1, s2, b2, j_lo, j_hi):
            res = _mm_dense_kernel(s1, clip_lead(v1, s1[:-2], nlead), s2, b2,
                                   lead_start, lead_ext)
        elif k1 == "kernel" and k2 == "dense" and _kernel_left_full(s1, b1, s2, e2, j_lo, j_hi):
            res = _mm_kernel_dense(s1, b1, s2, clip_lead(v2, s2[:-2], nlead),
                                   lead_start, lead_ext)
        elif k1 == "kernel" and k2 == "diag" and _kernel_left_full(s1, b1, s2, e2, j_lo, j_hi):
            res = _mm_kernel_diag(s1, b1, s2, v2, lead_start, lead_ext, nlead)
        if res is not None:
            return res

    # anything else: densify both operands locally
    dg.densify_fallbacks += 1
    a = b1.to_dense()[..., :, j_lo - s1[-1]: j_hi - s1[-1]]
    b = b2.to_dense()[..., j_lo - s2[-2]: j_hi - s2[-2], :]

    def lead_clip_dense(arr, s):
        sl = []
        for ax in range(nlead):
            if arr.shape[ax] == 1:
                sl.append(slice(0, 1))
            else:
                sl.append(slice(lead_start[ax] - s[ax], lead_start[ax] - s[ax] + lead_ext[ax]))
        sl += [slice(None), slice(None)]
        return arr[tuple(sl)]

    a = lead_clip_dense(a, s1[:-2])
    b = lead_clip_dense(b, s2[:-2])
    out = np.einsum("...mj,...jk->...mk", a, b)
    out = np.broadcast_to(out, tuple(lead_ext) + out.shape[-2:]).copy()
    return (out_start, DenseBlock(out))


def _kernel_full_window(s1, e1, s2, kb, j_lo, j_hi) -> bool:
    """The pair touches the kernel's full row range and the left block's
    column range sits exactly on it (no partial kernel rows)."""
    rows = kb.matrix_shape[0]
    lead_ok = not kb.lead_reps or all(r == 1 for r in kb.lead_reps)
    return (lead_ok and s2[-2] == j_lo and j_hi - j_lo == rows
            and s1[-1] == s2[-2] and e1[-1] == rows)


def _kernel_left_full(s1, kb, s2, e2, j_lo, j_hi) -> bool:
    cols = kb.matrix_shape[1]
    lead_ok = not kb.lead_reps or all(r == 1 for r in kb.lead_reps)
    return (lead_ok and s1[-1] == j_lo and j_hi - j_lo == cols
            and s2[-2] == s1[-1] and e2[-2] == cols)


def _mm_diag_kernel(s1, diag_core, s2, kb: KernelBlock, lead_start, lead_ext, nlead):
    """Row-scale a kernel: the result keeps per-row filter patches."""
    if diag_core.ndim > 1 and any(d > 1 for d in diag_core.shape[:-1]):
        # per-lead-slice scaling values differ: patches cannot share them
        return None
    scale = diag_core.reshape(-1)
    oc, oh, ow = kb.out_geometry
    rows = oc * oh * ow
    occ = np.repeat(np.arange(oc), oh * ow)
    patches = kb.filt[occ] * scale[:rows, None, None, None]
    blk = PatchesBlock(patches, kb.stride, kb.padding, kb.in_geometry, kb.out_geometry,
                       (1,) * nlead if nlead else ())
    start = tuple(lead_start) + (s1[-2], s2[-1])
    return (start, blk)


def _mm_kernel_diag(s1, kb: KernelBlock, s2, diag_core, lead_start, lead_ext, nlead):
    """Column-scale a kernel: each row's patch entries pick up the column scale."""
    if diag_core.ndim > 1 and any(d > 1 for d in diag_core.shape[:-1]):
        return None
    scale = diag_core.reshape(-1)
    oc, oh, ow = kb.out_geometry
    ic, ih, iw = kb.in_geometry
    kh, kw = kb.filt.shape[2:]
    sy, sx = kb.stride
    py, px = kb.padding
    rows = oc * oh * ow
    patches = np.zeros((rows, ic, kh, kw), dtype=np.float64)
    for c in range(oc):
        for oy in range(oh):
            for ox in range(ow):
                r = (c * oh + oy) * ow + ox
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
                            patches[r, ci, ky, kx] = kb.filt[c, ci, ky, kx] * scale[col]
    blk = PatchesBlock(patches, kb.stride, kb.padding, kb.in_geometry, kb.out_geometry,
                       (1,) * nlead if nlead else ())
    start = tuple(lead_start) + (s1[-2], s2[-1])
    return (start, blk)


def _mm_dense_kernel(s1, a_core, s2, kb: KernelBlock, lead_start, lead_ext):
    """Dense x Toeplitz via window scatter-add (col2im style)."""
    oc, oh, ow = kb.out_geometry
    ic, ih, iw = kb.in_geometry
    kh, kw = kb.filt.shape[2:]
    sy, sx = kb.stride
    py, px = kb.padding
    lead_shape = a_core.shape[:-2]
    m = a_core.shape[-2]
    out = np.zeros(lead_shape + (m, ic, ih, iw), dtype=np.float64)
    for c in range(oc):
        for oy in range(oh):
            y0 = oy * sy - py
            ys = slice(max(y0, 0), min(y0 + kh, ih))
            fys = slice(max(y0, 0) - y0, max(y0, 0) - y0 + (ys.stop - ys.start))
            for ox in range(ow):
                r = (c * oh + oy) * ow + ox
                x0 = ox * sx - px
                xs = slice(max(x0, 0), min(x0 + kw, iw))
                fxs = slice(max(x0, 0) - x0, max(x0, 0) - x0 + (xs.stop - xs.start))
                out[..., :, :, ys, xs] += (
                    a_core[..., :, r][..., :, None, None, None]
                    * kb.filt[c][:, fys, fxs])
    out = out.reshape(lead_shape + (m, ic * ih * iw))
    out = np.broadcast_to(out, tuple(lead_ext) + out.shape[-2:]).copy()
    start = tuple(lead_start) + (s1[-2], s2[-1])
    return (start, DenseBlock(out))


def _mm_kernel_dense(s1, kb: KernelBlock, s2, b_core, lead_start, lead_ext):
    """Toeplitz x Dense via gathered windows (im2col style)."""
    oc, oh, ow = kb.out_geometry
    ic, ih, iw = kb.in_geometry
    kh, kw = kb.filt.shape[2:]
    sy, sx = kb.stride
    py, px = kb.padding
    lead_shape = b_core.shape[:-2]
    ncols = b_core.shape[-1]
    x = b_core.reshape(lead_shape + (ic, ih, iw, ncols))
    xp = np.zeros(lead_shape + (ic, ih + 2 * py, iw + 2 * px, ncols), dtype=np.float64)
    xp[..., :, py:py + ih, px:px + iw, :] = x
    rows = oc * oh * ow
    out = np.zeros(lead_shape + (rows, ncols), dtype=np.float64)
    for c in range(oc):
        for oy in range(oh):
            for ox in range(ow):
                r = (c * oh + oy) * ow + ox
                win = xp[..., :, oy * sy:oy * sy + kh, ox * sx:ox * sx + kw, :]
                out[..., r, :] = np.einsum(
                    "...yxn,yx->...n",
                    win.reshape(lead_shape + (ic * kh, kw, ncols)),
                    kb.filt[c].reshape(ic * kh, kw))
    out = np.broadcast_to(out, tuple(lead_ext) + out.shape[-2:]).copy()
    start = tuple(lead_start) + (s1[-2], s2[-1])
    return (start, DenseBlock(out))
