"""Domain rewrite rules over the tensor IR.

Each rule inspects one node and either returns a replacement expression
with the same effective shape or None.  The driver applies rules bottom-up
with sharing preserved, so a subtree referenced from several places is
rewritten once and stays one object.

Rules never drop or duplicate a noise-minting IrSym in a way that changes
which serials a statement reaches first: replacements keep operand order,
and eliminations are guarded to symbol-free subtrees.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Dict, List, Optional, Tuple

from ..ir.metadata import IrMetadata
from ..ir.nodes import (
    IrBinary,
    IrClamp,
    IrCombineToPoly,
    IrCombineToSym,
    IrConst,
    IrExpr,
    IrExtractPolyCoeff,
    IrExtractPolyConst,
    IrExtractSymCoeff,
    IrExtractSymConst,
    IrInnerProduct,
    IrMult,
    IrReduce,
    IrRemoveDimension,
    IrRepeat,
    IrSym,
    IrTernary,
    IrUnary,
    expr_children,
)
from ..ir.symconst import ONE

Rule = Callable[[IrExpr], Optional[IrExpr]]

_SCALAR_WRAPPERS = ("IrRepeat", "IrAddDimension", "IrAddDimensionConst")


def _strip_broadcast(e: IrExpr) -> IrExpr:
    while type(e).__name__ in _SCALAR_WRAPPERS:
        e = e.arg
    return e


def _is_zero_tree(e: IrExpr) -> bool:
    core = _strip_broadcast(e)
    return isinstance(core, IrConst) and core.value == 0.0


def _contains(e: IrExpr, pred, cache: Dict[int, bool]) -> bool:
    hit = cache.get(id(e))
    if hit is not None:
        return hit
    out = pred(e) or any(_contains(c, pred, cache) for c in expr_children(e))
    cache[id(e)] = out
    return out


def _is_division(e: IrExpr) -> bool:
    return isinstance(e, IrBinary) and e.op == "/"


def _is_real_or_bool(md: IrMetadata) -> bool:
    # Stacked metadata is fine: the runtime value is a plain tensor whenever
    # the type is scalar, whatever the axis grouping looks like.
    return md.ty.name in ("Real", "Bool")


def same_tree(a: IrExpr, b: IrExpr, cache: Dict[Tuple[int, int], bool]) -> bool:
    """Structural equality; shared nodes short-circuit by identity."""
    if a is b:
        return True
    key = (id(a), id(b))
    hit = cache.get(key)
    if hit is not None:
        return hit
    out = type(a) is type(b)
    if out:
        for f in dataclasses.fields(a):
            va, vb = getattr(a, f.name), getattr(b, f.name)
            if isinstance(va, IrExpr):
                if not same_tree(va, vb, cache):
                    out = False
                    break
            elif va != vb:
                out = False
                break
    cache[key] = out
    return out


class RewriteSession:
    """One bottom-up sweep's shared caches and rule set."""

    def __init__(self, rules: Tuple[Rule, ...]):
        self.rules = rules
        self.memo: Dict[int, IrExpr] = {}
        self.eq_cache: Dict[Tuple[int, int], bool] = {}
        self.div_cache: Dict[int, bool] = {}
        self.sym_cache: Dict[int, bool] = {}
        self.changed = False

    def has_division(self, e: IrExpr) -> bool:
        return _contains(e, _is_division, self.div_cache)

    def has_sym(self, e: IrExpr) -> bool:
        return _contains(e, lambda n: isinstance(n, IrSym), self.sym_cache)

    def rewrite(self, e: IrExpr) -> IrExpr:
        hit = self.memo.get(id(e))
        if hit is not None:
            return hit
        changes = {}
        for f in dataclasses.fields(e):
            v = getattr(e, f.name)
            if isinstance(v, IrExpr):
                nv = self.rewrite(v)
                if nv is not v:
                    changes[f.name] = nv
        node = dataclasses.replace(e, **changes) if changes else e
        for _ in range(8):
            for rule in self.rules:
                out = rule(self, node)
                if out is not None:
                    self.changed = True
                    node = out
                    break
            else:
                break
        self.memo[id(e)] = node
        return node


# -- rules --------------------------------------------------------------------


def rule_cancel_extract(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """extract(combine(coeff, const)) reads back the part it wrapped."""
    if isinstance(e, (IrExtractPolyCoeff, IrExtractSymCoeff)) and isinstance(
        e.arg, (IrCombineToPoly, IrCombineToSym)
    ):
        return e.arg.coeff
    if isinstance(e, (IrExtractPolyConst, IrExtractSymConst)) and isinstance(
        e.arg, (IrCombineToPoly, IrCombineToSym)
    ):
        return e.arg.const
    return None


def rule_ternary(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """c ? a : b becomes c*a + (not c)*b when the branches are division-free.

    Both branches of an expression ternary evaluate eagerly anyway, so the
    arithmetic form is value-identical for 0/1 conditions; the division
    guard keeps a masked-out nan (0 * x/0) from poisoning the sum.
    """
    if not isinstance(e, IrTernary) or not _is_real_or_bool(e.md):
        return None
    if not _is_real_or_bool(e.cond.md):
        return None
    if sess.has_division(e.then) or sess.has_division(e.other):
        return None
    if _is_zero_tree(e.other):
        return IrMult(e.cond, e.then, e.md)
    if _is_zero_tree(e.then):
        inv = IrUnary("not", e.cond, e.cond.md)
        return IrMult(inv, e.other, e.md)
    keep = IrMult(e.cond, e.then, e.md)
    inv = IrUnary("not", e.cond, e.cond.md)
    drop = IrMult(inv, e.other, e.md)
    return IrBinary("+", keep, drop, e.md)


def rule_clamp(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """(x >= 0)*x is a clamp at zero from below; (x <= 0)*x from above."""
    if not isinstance(e, IrMult):
        return None
    for cond, val in ((e.lhs, e.rhs), (e.rhs, e.lhs)):
        if not isinstance(cond, IrBinary) or cond.op not in (">=", "<="):
            continue
        if not _is_zero_tree(cond.rhs):
            continue
        if not same_tree(cond.lhs, val, sess.eq_cache):
            continue
        if cond.op == ">=":
            return IrClamp(val, 0.0, None, e.md)
        return IrClamp(val, None, 0.0, e.md)
    return None


def rule_fold_zero(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """x*0 collapses to the zero operand; x+0 and x-0 collapse to x.

    Multiplication folds only when the discarded side mints no symbols and
    divides nothing, so the fold cannot change noise allocation or turn a
    nan into a zero.
    """
    if isinstance(e, IrMult):
        for zero, other in ((e.lhs, e.rhs), (e.rhs, e.lhs)):
            if not _is_zero_tree(zero) or zero.md != e.md:
                continue
            if sess.has_sym(other) or sess.has_division(other):
                continue
            return zero
    if isinstance(e, IrBinary) and e.op in ("+", "-"):
        if _is_zero_tree(e.rhs) and e.lhs.md == e.md:
            return e.lhs
        if e.op == "+" and _is_zero_tree(e.lhs) and e.rhs.md == e.md:
            return e.rhs
    return None


def rule_fuse_repeat(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """Tiling commutes with elementwise math: op(repeat x, repeat y) with
    equal factors becomes repeat(op(x, y))."""
    if isinstance(e, IrMult):
        op_lhs, op_rhs = e.lhs, e.rhs
        build = lambda l, r, md: IrMult(l, r, md)
    elif isinstance(e, IrBinary):
        op_lhs, op_rhs = e.lhs, e.rhs
        op = e.op
        build = lambda l, r, md: IrBinary(op, l, r, md)
    else:
        return None
    if not (isinstance(op_lhs, IrRepeat) and isinstance(op_rhs, IrRepeat)):
        return None
    if op_lhs.factors != op_rhs.factors:
        return None
    a, b = op_lhs.arg, op_rhs.arg
    if a.md.flat_sigma() != b.md.flat_sigma():
        return None
    inner_md = a.md if a.md.ty.name == e.md.ty.name else b.md
    if inner_md.ty.name != e.md.ty.name:
        inner_md = a.md.with_type(e.md.ty)
    return IrRepeat(build(a, b, inner_md), op_lhs.factors, e.md)


def rule_sink_unary(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """An elementwise unary commutes with tiling and axis insertion, so it
    sinks below broadcast wrappers; this exposes the wrapper to the reduce
    pattern matcher."""
    if not isinstance(e, IrUnary):
        return None
    arg = e.arg
    if isinstance(arg, IrRepeat):
        inner = IrUnary(e.op, arg.arg, arg.arg.md)
        return IrRepeat(inner, arg.factors, e.md)
    if type(arg).__name__ in ("IrAddDimension", "IrAddDimensionConst"):
        inner = IrUnary(e.op, arg.arg, arg.arg.md)
        return dataclasses.replace(arg, arg=inner, md=e.md)
    return None


def rule_mask_distribute(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """Push a boolean mask into a sum: c*(u + v) = c*u + c*v exactly for
    0/1 masks, exposing per-addend reduce patterns."""
    if not isinstance(e, IrMult) or not _is_real_or_bool(e.md):
        return None
    for mask, body in ((e.lhs, e.rhs), (e.rhs, e.lhs)):
        if _mask_type(mask) and isinstance(body, IrBinary) and body.op == "+":
            left = IrMult(mask, body.lhs, e.md)
            right = IrMult(mask, body.rhs, e.md)
            return IrBinary("+", left, right, e.md)
    return None


def _mask_type(e: IrExpr) -> bool:
    return e.md.ty.name == "Bool"


def rule_reduce_split(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """Sum-reduce distributes over addition."""
    if not isinstance(e, IrReduce) or e.op != "sum" or not _is_real_or_bool(e.md):
        return None
    if not (isinstance(e.arg, IrBinary) and e.arg.op == "+"):
        return None
    left = IrReduce(e.arg.lhs, e.axis, "sum", e.md)
    right = IrReduce(e.arg.rhs, e.axis, "sum", e.md)
    return IrBinary("+", left, right, e.md)


def _flatten_mult(e: IrExpr, out: List[IrExpr]) -> None:
    if isinstance(e, IrMult) and _is_real_or_bool(e.md):
        _flatten_mult(e.lhs, out)
        _flatten_mult(e.rhs, out)
    else:
        out.append(e)


def _mult_chain(factors: List[IrExpr], md: IrMetadata) -> IrExpr:
    acc = factors[0]
    for f in factors[1:]:
        acc = IrMult(acc, f, md)
    return acc


def rule_matmul(sess: RewriteSession, e: IrExpr) -> Optional[IrExpr]:
    """Reduce of a product of complementary tilings is a matrix product.

    The operand trio is the three trailing axes [m, j, t]: one factor group
    tiles a [lead..., m, j, 1] source along t, the other tiles a
    [lead..., 1, j, t] source along m, and the reduce contracts j.  Dropping
    the unit axes gives einsum '...mj,...jt->...mt' with no tiled
    intermediate.  Extra mask factors fold into whichever side they tile
    with, which generalizes the plain two-factor pattern.
    """
    if not isinstance(e, IrReduce) or e.op != "sum" or not _is_real_or_bool(e.md):
        return None
    arg = e.arg
    if not isinstance(arg, IrMult) or not _is_real_or_bool(arg.md):
        return None
    rank = len(arg.md.flat_sigma())
    if rank < 3 or e.axis != rank - 2:
        return None
    factors: List[IrExpr] = []
    _flatten_mult(arg, factors)
    last_group: List[IrExpr] = []
    first_group: List[IrExpr] = []
    for f in factors:
        if not isinstance(f, IrRepeat) or len(f.factors) != rank:
            return None
        reps = [i for i, s in enumerate(f.factors) if s != ONE]
        if reps == [rank - 1]:
            last_group.append(f.arg)
        elif reps == [rank - 3]:
            first_group.append(f.arg)
        else:
            return None
    if not last_group or not first_group:
        return None
    for src in last_group:
        if src.md.flat_sigma()[rank - 1] != ONE:
            return None
    for src in first_group:
        if src.md.flat_sigma()[rank - 3] != ONE:
            return None
    md_a = _group_md(last_group)
    md_b = _group_md(first_group)
    a_core = IrRemoveDimension(_mult_chain(last_group, md_a), rank - 1,
                               md_a.remove_axis(rank - 1))
    b_core = IrRemoveDimension(_mult_chain(first_group, md_b), rank - 3,
                               md_b.remove_axis(rank - 3))
    return IrInnerProduct(a_core, b_core, e.md)


def _group_md(group: List[IrExpr]) -> IrMetadata:
    for src in group:
        if src.md.ty.name == "Real":
            return src.md
    return group[0].md


DOMAIN_RULES: Tuple[Rule, ...] = (
    rule_cancel_extract,
    rule_ternary,
    rule_clamp,
    rule_fold_zero,
    rule_sink_unary,
    rule_fuse_repeat,
    rule_mask_distribute,
    rule_reduce_split,
    rule_matmul,
)


def _apply(root: IrExpr, rules: Tuple[Rule, ...]) -> IrExpr:
    return RewriteSession(rules).rewrite(root)


def rewrite_ternary(root: IrExpr) -> IrExpr:
    """Apply only the ternary-to-arithmetic rule, bottom-up."""
    return _apply(root, (rule_ternary,))


def rewrite_clamp(root: IrExpr) -> IrExpr:
    """Apply only the comparison-times-self clamp rule, bottom-up."""
    return _apply(root, (rule_clamp,))


def rewrite_matmul(root: IrExpr) -> IrExpr:
    """Apply only the reduce-of-tilings matmul rule, bottom-up."""
    return _apply(root, (rule_matmul,))


def rewrite_all(root: IrExpr, session: Optional[RewriteSession] = None) -> IrExpr:
    sess = session or RewriteSession(DOMAIN_RULES)
    return sess.rewrite(root)
