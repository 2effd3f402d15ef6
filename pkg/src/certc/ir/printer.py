"""Textual IR dump: one node per line, s-expression style."""

from __future__ import annotations

from typing import List

from . import nodes as N
from .symconst import short


def _head(e: N.IrExpr) -> str:
    if isinstance(e, N.IrConst):
        return "const %r %s" % (e.value, e.ty)
    if isinstance(e, N.IrVar):
        return "var %s" % e.name
    if isinstance(e, N.IrSym):
        return "sym #%d" % e.serial
    if isinstance(e, N.IrBinary):
        return "binary %s" % e.op
    if isinstance(e, N.IrMult):
        return "mult"
    if isinstance(e, N.IrUnary):
        return "unary %s" % e.op
    if isinstance(e, N.IrTernary):
        return "ternary"
    if isinstance(e, N.IrDot):
        return "dot"
    if isinstance(e, N.IrInnerProduct):
        return "inner-product"
    if isinstance(e, N.IrClamp):
        return "clamp lo=%s hi=%s" % (e.lo, e.hi)
    if isinstance(e, N.IrAddDimension):
        return "add-dim @%d" % e.axis
    if isinstance(e, N.IrAddDimensionConst):
        return "add-dim-const @%d %s" % (e.axis, short(e.size))
    if isinstance(e, N.IrRemoveDimension):
        return "remove-dim @%d" % e.axis
    if isinstance(e, N.IrRepeat):
        return "repeat [%s]" % ",".join(short(f) for f in e.factors)
    if isinstance(e, N.IrReduce):
        return "reduce %s @%d" % (e.op, e.axis)
    if isinstance(e, N.IrAccess):
        return "access %s" % e.field
    name = type(e).__name__
    if name.startswith("Ir"):
        name = name[2:]
    out = []
    for ch in name:
        if ch.isupper() and out:
            out.append("-")
        out.append(ch.lower())
    return "".join(out)


def print_expr(e: N.IrExpr, indent: int = 0, lines: List[str] = None) -> List[str]:
    if lines is None:
        lines = []
    pad = "  " * indent
    kids = N.expr_children(e)
    head = "%s(%s {%s}" % (pad, _head(e), e.md.describe())
    if not kids:
        lines.append(head + ")")
        return lines
    lines.append(head)
    for k in kids:
        print_expr(k, indent + 1, lines)
    lines[-1] += ")"
    return lines


def print_stmt(s: N.IrStmt, indent: int = 0, lines: List[str] = None) -> List[str]:
    if lines is None:
        lines = []
    pad = "  " * indent
    if isinstance(s, N.IrSkip):
        lines.append(pad + "(skip)")
    elif isinstance(s, N.IrAssignment):
        lines.append("%s(assign %s" % (pad, s.name))
        print_expr(s.value, indent + 1, lines)
        lines[-1] += ")"
    elif isinstance(s, N.IrSeq):
        lines.append(pad + "(seq")
        for st in s.stmts:
            print_stmt(st, indent + 1, lines)
        lines[-1] += ")"
    elif isinstance(s, N.IrITE):
        lines.append(pad + "(if")
        print_expr(s.cond, indent + 1, lines)
        print_stmt(s.then, indent + 1, lines)
        print_stmt(s.other, indent + 1, lines)
        lines[-1] += ")"
    elif isinstance(s, N.IrWhile):
        lines.append(pad + "(while")
        print_stmt(s.init, indent + 1, lines)
        print_expr(s.cond, indent + 1, lines)
        print_stmt(s.body, indent + 1, lines)
        lines[-1] += ")"
    elif isinstance(s, N.IrReturn):
        lines.append(pad + "(return")
        for v in s.values:
            print_expr(v, indent + 1, lines)
        lines[-1] += ")"
    else:
        lines.append(pad + "(?%s)" % type(s).__name__)
    return lines


def dump_program(p: N.IrProgram) -> str:
    lines = ["; program %s  fields=%s" % (p.name, ",".join(p.fields))]
    for kind in sorted(p.bodies):
        lines.append("; %s body" % kind)
        print_stmt(p.bodies[kind], 0, lines)
    return "\n".join(lines)
