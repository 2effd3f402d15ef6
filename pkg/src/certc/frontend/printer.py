"""Canonical text form of certifier programs.

Printing then reparsing yields the identical AST; precedence decides where
parentheses are required.
"""

from __future__ import annotations

from . import syntax as S

# binding strength, tighter binds higher
_PREC = {
    "ternary": 1,
    "or": 2,
    "and": 3,
    "cmp": 4,
    "add": 5,
    "mul": 6,
    "unary": 7,
    "postfix": 8,
}

_BIN_LEVEL = {
    "or": "or", "and": "and",
    "<=": "cmp", ">=": "cmp", "<": "cmp", ">": "cmp", "==": "cmp", "!=": "cmp",
    "In": "cmp",
    "+": "add", "-": "add",
    "*": "mul", "/": "mul",
}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return "%.1f" % v
    return repr(v)


def print_expr(e: S.Expr, parent: int = 0) -> str:
    if isinstance(e, S.RealLit):
        return _fmt_num(e.value)
    if isinstance(e, S.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, S.SymMint):
        return "sym"
    if isinstance(e, S.CurrRef):
        return "curr"
    if isinstance(e, S.PrevRef):
        return "prev"
    if isinstance(e, S.Var):
        return e.name
    if isinstance(e, S.Unary):
        p = _PREC["unary"]
        inner = print_expr(e.operand, p)
        text = ("-" + inner) if e.op == "-" else ("not " + inner)
        return _wrap(text, p, parent)
    if isinstance(e, S.Binary):
        lvl = _BIN_LEVEL[e.op]
        p = _PREC[lvl]
        # comparisons do not chain; arithmetic is left associative
        lhs = print_expr(e.lhs, p + 1 if lvl == "cmp" else p)
        rhs = print_expr(e.rhs, p + 1)
        return _wrap("%s %s %s" % (lhs, e.op, rhs), p, parent)
    if isinstance(e, S.Ternary):
        p = _PREC["ternary"]
        cond = print_expr(e.cond, p + 1)
        then = print_expr(e.then, p + 1)
        other = print_expr(e.other, p)
        return _wrap("%s ? %s : %s" % (cond, then, other), p, parent)
    if isinstance(e, S.Call):
        return "%s(%s)" % (e.name, ", ".join(print_expr(a) for a in e.args))
    if isinstance(e, S.Access):
        return "%s[%s]" % (print_expr(e.base, _PREC["postfix"]), e.field)
    if isinstance(e, S.MapCall):
        return "%s.map(%s)" % (print_expr(e.base, _PREC["postfix"]), e.func)
    if isinstance(e, S.DotCall):
        return "%s.dot(%s)" % (print_expr(e.base, _PREC["postfix"]), print_expr(e.arg))
    if isinstance(e, S.TraverseCall):
        head = "%s.traverse(%s, %s, %s, %s)" % (
            print_expr(e.base, _PREC["postfix"]), e.direction, e.priority, e.stop,
            e.replace)
        if e.invariant is not None:
            head += "{%s}" % print_expr(e.invariant)
        return head
    if isinstance(e, S.TupleExpr):
        return "(%s)" % ", ".join(print_expr(it) for it in e.items)
    raise TypeError(type(e))


def _wrap(text: str, prec: int, parent: int) -> str:
    return "(%s)" % text if prec < parent else text


def print_program(p: S.Program) -> str:
    out = []
    fields = ", ".join("%s %s" % (ty, nm) for ty, nm in p.shape.fields)
    annots = ", ".join(print_expr(a) for a in p.shape.annotations)
    out.append("def Shape as (%s){[%s]};" % (fields, annots))
    out.append("")
    for f in p.funcs:
        params = ", ".join("%s %s" % (ty, nm) for ty, nm in f.params)
        out.append("func %s(%s) = %s;" % (f.name, params, print_expr(f.body)))
    for t in p.transformers:
        out.append("")
        out.append("transformer %s{" % t.name)
        for kind, rhs in t.arms:
            out.append("    %s -> %s;" % (kind, print_expr(rhs)))
        out.append("}")
    out.append("")
    for fl in p.flows:
        out.append("flow(%s, %s, %s, %s);" % (fl.direction, fl.priority, fl.stop,
                                              fl.transformer))
    return "\n".join(out) + "\n"
