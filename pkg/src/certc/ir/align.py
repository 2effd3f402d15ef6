"""Operand alignment: rank padding, least-common metadata, repeats.

Elementwise IR nodes require operands with identical physical layouts.
Alignment first pads the lower-rank operand with broadcast axes (trailing
append when the leading dims line up, else a leading pad), then takes the
per-dimension least-common metadata, and finally wraps operands whose
materialized extents fall short in IrRepeat nodes.  A repeat whose factors
are all One is never emitted.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

from .metadata import (
    IrMetadata,
    ShapeError,
    lcm_meta,
    pad_strategy,
    repeat_factors,
)
from .nodes import IrAddDimension, IrExpr, IrRepeat
from .symconst import ONE


def coerce(expr: IrExpr, target: IrMetadata) -> IrExpr:
    """Wrap expr in pad/repeat nodes so its physical layout matches target."""
    md = expr.md
    while md.rank < target.rank:
        how = pad_strategy(md, target)
        pos = md.rank if how == "trailing" else 0
        md = md.insert_axis(pos, ONE, target.effective()[pos])
        expr = IrAddDimension(expr, pos, md)
    factors = repeat_factors(md, target)
    if any(f != ONE for f in factors):
        md = target.with_type(md.ty).with_width(expr.md.width)
        expr = IrRepeat(expr, factors, md)
    return expr


def align(e1: IrExpr, e2: IrExpr) -> Tuple[IrExpr, IrExpr, IrMetadata]:
    m = lcm_meta(e1.md, e2.md)
    return coerce(e1, m), coerce(e2, m), m


def align_many(exprs: Sequence[IrExpr]) -> Tuple[List[IrExpr], IrMetadata]:
    if not exprs:
        raise ShapeError("nothing to align")
    # fold highest rank first so lower-rank operands pad against the full
    # frame instead of pairing axes with each other
    order = sorted(range(len(exprs)), key=lambda i: -exprs[i].md.rank)
    m = exprs[order[0]].md
    for i in order[1:]:
        m = lcm_meta(m, exprs[i].md)
    return [coerce(e, m) for e in exprs], m
