"""IR well-formedness checks.

Two families of invariants: metadata consistency between a node and its
children (ranks, effective extents, the minimality rules for repeat and
add-dimension nodes), and the dominance discipline for variables (every
read preceded by an assignment on all paths; loop bodies may additionally
rely on names assigned in the loop init).
"""

from __future__ import annotations

from typing import Set

from . import nodes as N
from .metadata import IrMetadata
from .symconst import ONE, dim_mul, sym_eq


class IrValidationError(ValueError):
    pass


def _fail(node: N.IrExpr, msg: str):
    raise IrValidationError("%s: %s" % (type(node).__name__, msg))


def _same_effective(node: N.IrExpr, a: IrMetadata, b: IrMetadata):
    if a.rank != b.rank:
        _fail(node, "operand ranks %d vs %d" % (a.rank, b.rank))
    for i, (x, y) in enumerate(zip(a.effective(), b.effective())):
        if not sym_eq(x, y):
            _fail(node, "axis %d: %r vs %r" % (i, x, y))


def validate_expr(e: N.IrExpr):
    for c in N.expr_children(e):
        validate_expr(c)
    md = e.md
    if isinstance(e, (N.IrBinary, N.IrMult, N.IrInnerProduct)):
        pass
    if isinstance(e, (N.IrBinary, N.IrMult)):
        _same_effective(e, e.lhs.md, md)
        _same_effective(e, e.rhs.md, md)
    elif isinstance(e, N.IrTernary):
        _same_effective(e, e.cond.md, md)
        _same_effective(e, e.then.md, md)
        _same_effective(e, e.other.md, md)
    elif isinstance(e, N.IrRepeat):
        if len(e.factors) != md.rank:
            _fail(e, "factor count %d for rank %d" % (len(e.factors), md.rank))
        if all(f == ONE for f in e.factors):
            _fail(e, "vacuous repeat")
        if e.arg.md.rank != md.rank:
            _fail(e, "repeat changes rank")
        for i, f in enumerate(e.factors):
            s_in, _ = e.arg.md.axis_dims(i)
            s_out, _ = md.axis_dims(i)
            if not sym_eq(dim_mul(s_in, f), s_out):
                _fail(e, "axis %d: %r * %r != %r" % (i, s_in, f, s_out))
    elif isinstance(e, (N.IrAddDimension, N.IrAddDimensionConst)):
        if md.rank != e.arg.md.rank + 1:
            _fail(e, "must add exactly one axis")
        if not 0 <= e.axis <= e.arg.md.rank:
            _fail(e, "axis %d out of range" % e.axis)
        if md.axis_dims(e.axis)[0] != ONE:
            _fail(e, "added axis must have unit extent")
    elif isinstance(e, N.IrRemoveDimension):
        if md.rank != e.arg.md.rank - 1:
            _fail(e, "must drop exactly one axis")
        if e.arg.md.axis_dims(e.axis)[0] != ONE:
            _fail(e, "removed axis must have unit extent")
    elif isinstance(e, N.IrReduce):
        if md.rank != e.arg.md.rank - 1:
            _fail(e, "reduce drops exactly one axis")
        if e.arg.md.axis_dims(e.axis)[1] != ONE:
            _fail(e, "reduced axis carries a pending broadcast")
    elif isinstance(e, (N.IrExtractPolyCoeff, N.IrExtractSymCoeff)):
        if md.rank != e.arg.md.rank + 1:
            _fail(e, "coefficient view appends one axis")
    elif isinstance(e, (N.IrCombineToPoly, N.IrCombineToSym)):
        if e.coeff.md.rank != e.const.md.rank + 1:
            _fail(e, "coefficient part needs one extra trailing axis")
        _same_effective(e, e.const.md.with_type(md.ty), md)
    return True


def _free_vars(e: N.IrExpr, out: Set[str]):
    if isinstance(e, N.IrVar):
        out.add(e.name)
    for c in N.expr_children(e):
        _free_vars(c, out)


def _check_stmt(s: N.IrStmt, defined: Set[str]) -> Set[str]:
    if isinstance(s, N.IrSkip):
        return defined
    if isinstance(s, N.IrAssignment):
        reads: Set[str] = set()
        _free_vars(s.value, reads)
        missing = reads - defined
        if missing:
            raise IrValidationError("read before assignment: %s" % ", ".join(sorted(missing)))
        validate_expr(s.value)
        return defined | {s.name}
    if isinstance(s, N.IrSeq):
        for st in s.stmts:
            defined = _check_stmt(st, defined)
        return defined
    if isinstance(s, N.IrITE):
        reads: Set[str] = set()
        _free_vars(s.cond, reads)
        if reads - defined:
            raise IrValidationError("branch condition reads undefined variable")
        validate_expr(s.cond)
        d1 = _check_stmt(s.then, set(defined))
        d2 = _check_stmt(s.other, set(defined))
        return d1 & d2
    if isinstance(s, N.IrWhile):
        after_init = _check_stmt(s.init, set(defined))
        reads: Set[str] = set()
        _free_vars(s.cond, reads)
        if reads - after_init:
            raise IrValidationError("loop condition reads undefined variable")
        validate_expr(s.cond)
        _check_stmt(s.body, set(after_init))
        return after_init
    if isinstance(s, N.IrReturn):
        reads: Set[str] = set()
        for v in s.values:
            _free_vars(v, reads)
            validate_expr(v)
        if reads - defined:
            raise IrValidationError("return reads undefined variable")
        return defined
    raise IrValidationError("unknown statement %r" % type(s).__name__)


def validate_body(body: N.IrStmt, seeded=("curr", "prev")):
    _check_stmt(body, set(seeded))
    return True


def validate_program(p: N.IrProgram):
    for body in p.bodies.values():
        validate_body(body)
    return True
