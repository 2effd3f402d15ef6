"""Shape analysis: typed certifier programs to tensor IR.

Every transformer arm is written against a single abstract neuron; shape
analysis rewrites it into tensor operations that compute a whole layer for
a whole batch at once.  The central device is the metadata stack: `map`
and `traverse` push an iteration dimension instead of looping, expression
values split into coefficient and constant parts with the coefficient
width as a trailing axis, and binary operators align operand layouts by
padding, least-common metadata, and explicit repeats.  Traversals lower to
while loops over a frontier mask: the highest-priority live terms are
replaced through a gather and summed back into the state, so one iteration
substitutes across the entire frontier at once.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import replace as dc_replace
from typing import Dict, List, Optional, Tuple

from ..frontend import syntax as S
from ..frontend.typecheck import BUILTIN_FIELDS, CheckedProgram, arm_has_tuple
from ..frontend.types import (BOOL, NEURON, POLYEXP, REAL, SYM, SYMEXP, Type,
                              is_expression, join)
from ..ir import (
    BATCH_SIZE,
    CURR_SIZE,
    ONE,
    POLY_SIZE,
    PREV_SIZE,
    SYM_SIZE,
    FlowIr,
    IrAccess,
    IrAddDimensionConst,
    IrAssignment,
    IrBinary,
    IrCombineToPoly,
    IrCombineToSym,
    IrConst,
    IrConstToPoly,
    IrConstToSym,
    IrDot,
    IrExpr,
    IrExtractPolyCoeff,
    IrExtractPolyConst,
    IrExtractSymCoeff,
    IrExtractSymConst,
    IrITE,
    IrMapCoeff,
    IrMapNeuron,
    IrMapNoise,
    IrMetadata,
    IrMult,
    IrNeuronToPoly,
    IrNoiseToSym,
    IrProgram,
    IrReduce,
    IrRemoveDimension,
    IrRepeat,
    IrReturn,
    IrStmt,
    IrSym,
    IrTernary,
    IrUnary,
    IrVar,
    IrWhile,
    MetaElem,
    ShapeVar,
    SymConst,
    align,
    align_many,
    coerce,
    lcm_meta,
    seq,
    validate_program,
)

CMP_OPS = ("<=", ">=", "<", ">", "==", "!=")
BOOL_OPS = ("and", "or")

# priority assigned to stopped terms so the frontier max never picks them
NEG_LARGE = -1e30


class AnalysisError(ValueError):
    pass


_EXTRACT = {
    "PolyExp": (IrExtractPolyCoeff, IrExtractPolyConst),
    "SymExp": (IrExtractSymCoeff, IrExtractSymConst),
}
_COMBINE = {"PolyExp": IrCombineToPoly, "SymExp": IrCombineToSym}
_PROMOTE = {
    ("Real", "PolyExp"): IrConstToPoly,
    ("Neuron", "PolyExp"): IrNeuronToPoly,
    ("Real", "SymExp"): IrConstToSym,
    ("Sym", "SymExp"): IrNoiseToSym,
}
_DEFAULT_WIDTH = {"PolyExp": POLY_SIZE, "SymExp": SYM_SIZE}


def _layer_md(ty: Type, size: SymConst) -> IrMetadata:
    return IrMetadata.of(ty, (BATCH_SIZE, size), (ONE, ONE))


def _force_batch(md: IrMetadata) -> IrMetadata:
    """Field access result layout: flat axis 0 becomes the batch axis."""
    e0 = md.elems[0]
    e0 = dc_replace(e0, sigma=(BATCH_SIZE,) + e0.sigma[1:], beta=(ONE,) + e0.beta[1:])
    return IrMetadata((e0,) + md.elems[1:], md.width)


class Analyzer:
    """Compiles one checked program; counters make output deterministic."""

    def __init__(self, checked: CheckedProgram):
        self.checked = checked
        self.program = checked.program
        self.funcs = {f.name: f for f in checked.program.funcs}
        self._tmp = itertools.count(1)
        self._sym_serial = itertools.count(1)
        self._shape_var = itertools.count(1)
        self._stmts: List[List[IrStmt]] = []

    # -- statement emission ------------------------------------------------

    def emit(self, st: IrStmt) -> None:
        self._stmts[-1].append(st)

    @contextmanager
    def scope(self):
        self._stmts.append([])
        try:
            yield self._stmts[-1]
        finally:
            self._stmts.pop()

    # -- small builders ----------------------------------------------------

    def const(self, value: float, ty: Type = REAL) -> IrConst:
        return IrConst(float(value), ty, IrMetadata.scalar(ty))

    def parts(self, e: IrExpr) -> Tuple[IrExpr, IrExpr]:
        kind = e.md.ty.name
        cnode, knode = _EXTRACT[kind]
        return cnode(e, e.md.coeff_meta()), knode(e, e.md.const_meta())

    def promote(self, e: IrExpr, kind: str) -> IrExpr:
        t = e.md.ty.name
        if t == kind:
            return e
        try:
            node = _PROMOTE[(t, kind)]
        except KeyError:
            raise AnalysisError("cannot promote %s to %s" % (t, kind))
        return node(e, e.md.with_type(Type(kind)).with_width(None))

    def combine(self, coeff: IrExpr, const: IrExpr, kind: str) -> IrExpr:
        width: Optional[SymConst] = coeff.md.effective()[-1]
        if width == _DEFAULT_WIDTH[kind]:
            width = None
        node = _COMBINE[kind]
        md = const.md.with_type(Type(kind)).with_width(width)
        return node(coeff, const, md)

    def binary(self, op: str, a: IrExpr, b: IrExpr, ty: Type) -> IrExpr:
        a2, b2, m = align(a, b)
        if op == "*":
            return IrMult(a2, b2, m.with_type(ty))
        return IrBinary(op, a2, b2, m.with_type(ty))

    def select(self, cond: IrExpr, then: IrExpr, other: IrExpr, ty: Type) -> IrExpr:
        (c2, t2, o2), m = align_many([cond, then, other])
        return IrTernary(c2, t2, o2, m.with_type(ty))

    # -- expression visitors -------------------------------------------------

    def visit(self, ctx: Dict[str, IrExpr], e: S.Expr) -> IrExpr:
        if isinstance(e, S.RealLit):
            return self.const(e.value)
        if isinstance(e, S.BoolLit):
            return self.const(1.0 if e.value else 0.0, BOOL)
        if isinstance(e, S.SymMint):
            md = _layer_md(SYMEXP, CURR_SIZE)
            return IrSym(next(self._sym_serial), md)
        if isinstance(e, S.CurrRef):
            return ctx["curr"]
        if isinstance(e, S.PrevRef):
            return ctx["prev"]
        if isinstance(e, S.Var):
            try:
                return ctx[e.name]
            except KeyError:
                raise AnalysisError("unbound name %r" % e.name)
        if isinstance(e, S.Unary):
            return self.visit_unary(ctx, e)
        if isinstance(e, S.Binary):
            return self.visit_binary(ctx, e)
        if isinstance(e, S.Ternary):
            return self.visit_ternary(ctx, e)
        if isinstance(e, S.Call):
            return self.visit_call(ctx, e)
        if isinstance(e, S.Access):
            return self.visit_access(ctx, e)
        if isinstance(e, S.MapCall):
            return self.visit_map(ctx, e)
        if isinstance(e, S.DotCall):
            return self.visit_dot(ctx, e)
        if isinstance(e, S.TraverseCall):
            return self.visit_traverse(ctx, e)
        raise AnalysisError("unhandled expression %r" % (e,))

    def visit_unary(self, ctx, e: S.Unary) -> IrExpr:
        a = self.visit(ctx, e.operand)
        if e.op == "not":
            return IrUnary("not", a, a.md.with_type(BOOL))
        ty = a.md.ty
        if ty.name in ("Neuron", "Sym"):
            a = self.promote(a, "PolyExp" if ty.name == "Neuron" else "SymExp")
            ty = a.md.ty
        if is_expression(ty):
            c, k = self.parts(a)
            nc = IrUnary("neg", c, c.md)
            nk = IrUnary("neg", k, k.md)
            return self.combine(nc, nk, ty.name)
        return IrUnary("neg", a, a.md.with_type(REAL))

    def visit_binary(self, ctx, e: S.Binary) -> IrExpr:
        a = self.visit(ctx, e.lhs)
        b = self.visit(ctx, e.rhs)
        op = e.op
        if op in BOOL_OPS or op in CMP_OPS:
            return self.binary(op, a, b, BOOL)
        ta, tb = a.md.ty, b.md.ty
        j = join(ta, tb)
        if j is None:
            raise AnalysisError("cannot combine %s and %s" % (ta, tb))
        if op in ("+", "-"):
            if is_expression(j):
                return self.binary_expr(op, a, b, j.name)
            return self.binary(op, a, b, j)
        if op == "*":
            if is_expression(j):
                if is_expression(ta) or ta.name in ("Neuron", "Sym"):
                    scalar, expr, scalar_left = b, a, False
                else:
                    scalar, expr, scalar_left = a, b, True
                return self.scaling("*", scalar, self.promote(expr, j.name), scalar_left)
            return self.binary("*", a, b, j)
        if op == "/":
            if is_expression(j):
                return self.scaling("/", b, self.promote(a, j.name), False)
            return self.binary("/", a, b, j)
        raise AnalysisError("unknown operator %r" % op)

    def binary_expr(self, op: str, a: IrExpr, b: IrExpr, kind: str) -> IrExpr:
        a = self.promote(a, kind)
        b = self.promote(b, kind)
        ca, ka = self.parts(a)
        cb, kb = self.parts(b)
        c = self.binary(op, ca, cb, REAL)
        k = self.binary(op, ka, kb, REAL)
        return self.combine(c, k, kind)

    def scaling(self, op: str, scalar: IrExpr, expr: IrExpr, scalar_left: bool) -> IrExpr:
        """Multiply or divide an expression value by a Real operand."""
        kind = expr.md.ty.name
        c, k = self.parts(expr)
        w = expr.md.coeff_width()
        pos = scalar.md.rank
        s_wide = IrAddDimensionConst(scalar, pos, w, scalar.md.insert_axis(pos, ONE, w))
        c2, s2, mc = align(c, s_wide)
        k2, s3, mk = align(k, scalar)
        if op == "*":
            cpart = IrMult(s2, c2, mc.with_type(REAL)) if scalar_left else IrMult(c2, s2, mc.with_type(REAL))
            kpart = IrMult(s3, k2, mk.with_type(REAL)) if scalar_left else IrMult(k2, s3, mk.with_type(REAL))
        else:
            cpart = IrBinary("/", c2, s2, mc.with_type(REAL))
            kpart = IrBinary("/", k2, s3, mk.with_type(REAL))
        return self.combine(cpart, kpart, kind)

    def visit_ternary(self, ctx, e: S.Ternary) -> IrExpr:
        cond = self.visit(ctx, e.cond)
        a = self.visit(ctx, e.then)
        b = self.visit(ctx, e.other)
        j = join(a.md.ty, b.md.ty)
        if j is None:
            raise AnalysisError("branches disagree: %s vs %s" % (a.md.ty, b.md.ty))
        if j.name in ("Neuron", "Sym"):
            j = POLYEXP if j.name == "Neuron" else SYMEXP
        if is_expression(j):
            a = self.promote(a, j.name)
            b = self.promote(b, j.name)
            ca, ka = self.parts(a)
            cb, kb = self.parts(b)
            c = self.select(cond, ca, cb, REAL)
            k = self.select(cond, ka, kb, REAL)
            return self.combine(c, k, j.name)
        return self.select(cond, a, b, j)

    def visit_call(self, ctx, e: S.Call) -> IrExpr:
        if e.name in ("max", "min"):
            a = self.visit(ctx, e.args[0])
            b = self.visit(ctx, e.args[1])
            return self.binary(e.name, a, b, REAL)
        return self.inline(ctx, e.name, [self.visit(ctx, a) for a in e.args])

    def inline(self, ctx, fname: str, args: List[IrExpr]) -> IrExpr:
        f = self.funcs.get(fname)
        if f is None:
            raise AnalysisError("unknown function %r" % fname)
        if len(args) != len(f.params):
            raise AnalysisError("%s expects %d args" % (fname, len(f.params)))
        child = {"curr": ctx["curr"]} if "curr" in ctx else {}
        for (_, pname), arg in zip(f.params, args):
            child[pname] = arg
        return self.visit(child, f.body)

    def visit_access(self, ctx, e: S.Access) -> IrExpr:
        base = self.visit(ctx, e.base)
        if e.field == "weight":
            md = _force_batch(base.md).with_type(REAL.list_of()).with_width(None)
            return IrAccess(base, "weight", md)
        fty = self.checked.shape_fields.get(e.field) or BUILTIN_FIELDS.get(e.field)
        if fty is None:
            raise AnalysisError("unknown field %r" % e.field)
        ty = fty.list_of() if base.md.ty.is_list else fty
        md = _force_batch(base.md).with_type(ty).with_width(None)
        return IrAccess(base, e.field, md)

    def visit_dot(self, ctx, e: S.DotCall) -> IrExpr:
        lhs = self.visit(ctx, e.base)
        rhs = self.visit(ctx, e.arg)
        elem = lhs.md.ty.name
        out = {"Neuron": POLYEXP, "PolyExp": POLYEXP, "SymExp": SYMEXP, "Real": REAL}.get(elem)
        if out is None:
            raise AnalysisError("dot cannot combine %s" % lhs.md.ty)
        return IrDot(lhs, rhs, _layer_md(out, CURR_SIZE))

    # -- map -----------------------------------------------------------------

    def _map_views(self, base: IrExpr) -> Tuple[IrExpr, IrExpr, IrExpr]:
        """Handle tensor, coefficient view, and held-aside constant part."""
        kind = base.md.ty.name
        w = base.md.coeff_width()
        handle_ty = NEURON if kind == "PolyExp" else SYM
        handle_node = IrMapNeuron if kind == "PolyExp" else IrMapNoise
        n_md = base.md.compressed().pushed(MetaElem(handle_ty, False, (w,), (ONE,)))
        c_md = base.md.pushed(MetaElem(REAL, False, (w,), (ONE,)))
        n_ir = handle_node(base, n_md)
        c_ir = IrMapCoeff(base, c_md)
        knode = _EXTRACT[kind][1]
        k_ir = knode(base, base.md.const_meta())
        return n_ir, c_ir, k_ir

    def visit_map(self, ctx, e: S.MapCall) -> IrExpr:
        base = self.visit(ctx, e.base)
        if base.md.ty.name == "Neuron":
            base = self.promote(base, "PolyExp")
        kind = base.md.ty.name
        if kind not in _EXTRACT:
            raise AnalysisError("map needs an expression value, got %s" % base.md.ty)
        f = self.funcs.get(e.func)
        if f is None or len(f.params) != 2:
            raise AnalysisError("map function %r must take two parameters" % e.func)
        n_ir, c_ir, k_ir = self._map_views(base)
        child = {"curr": ctx["curr"]} if "curr" in ctx else {}
        child[f.params[0][1]] = n_ir
        child[f.params[1][1]] = c_ir
        body = self.visit(child, f.body)
        axis = base.md.rank
        tpl = c_ir.md
        if is_expression(body.md.ty):
            bkind = body.md.ty.name
            bc, bk = self.parts(body)
            bc = coerce(bc, lcm_meta(bc.md, tpl))
            bk = coerce(bk, lcm_meta(bk.md, tpl))
            rc = IrReduce(bc, axis, "sum", bc.md.remove_axis(axis).with_type(REAL))
            rk = IrReduce(bk, axis, "sum", bk.md.remove_axis(axis).with_type(REAL))
            total = self.binary("+", rk, k_ir, REAL)
            return self.combine(rc, total, bkind)
        body = coerce(body, lcm_meta(body.md, tpl))
        r = IrReduce(body, axis, "sum", body.md.remove_axis(axis).with_type(REAL))
        return self.binary("+", r, k_ir, REAL)

    # -- traverse --------------------------------------------------------------

    def _traverse_live(self, ctx, e: S.TraverseCall, st_var: IrVar) -> Tuple[IrExpr, IrExpr, IrExpr]:
        """Map views plus the mask of terms still eligible for replacement."""
        n_ir, c_ir, _ = self._map_views(st_var)
        stop = self.inline(ctx, e.stop, [n_ir, c_ir])
        nonzero = self.binary("!=", c_ir, self.const(0.0), BOOL)
        going = IrUnary("not", stop, stop.md.with_type(BOOL))
        act = self.binary("and", nonzero, going, BOOL)
        # backsubstitution terminates at the input layer: its neurons have
        # no defining expression, so they are never part of the frontier
        layer = IrAccess(n_ir, "layer", _force_batch(n_ir.md).with_type(REAL).with_width(None))
        inner = self.binary(">", layer, self.const(0.0), BOOL)
        act = self.binary("and", act, inner, BOOL)
        return n_ir, c_ir, act

    def _any(self, e: IrExpr) -> IrExpr:
        """Reduce a mask to a single truth value."""
        while e.md.rank > 1:
            axis = e.md.rank - 1
            sig, bet = e.md.axis_dims(axis)
            md = e.md.remove_axis(axis).with_type(BOOL)
            if sig == ONE and bet != ONE:
                e = IrRemoveDimension(e, axis, md)
            else:
                e = IrReduce(e, axis, "max", md)
        return e

    def visit_traverse(self, ctx, e: S.TraverseCall) -> IrExpr:
        base = self.visit(ctx, e.base)
        if base.md.ty.name == "Neuron":
            base = self.promote(base, "PolyExp")
        if base.md.ty.name != "PolyExp":
            raise AnalysisError("traverse needs a PolyExp, got %s" % base.md.ty)
        serial = next(self._tmp)
        st_name = "tr%d_state" % serial
        cont_name = "tr%d_more" % serial
        sv = ShapeVar(next(self._shape_var))
        st_md = base.md.with_width(sv)
        st_var = IrVar(st_name, st_md)
        axis = base.md.rank

        with self.scope() as init_stmts:
            self.emit(IrAssignment(st_name, base))
            _, _, act0 = self._traverse_live(ctx, e, st_var)
            self.emit(IrAssignment(cont_name, self._any(act0)))
            init = seq(*list(init_stmts))

        with self.scope() as body_stmts:
            n_ir, c_ir, act = self._traverse_live(ctx, e, st_var)
            prio = self.inline(ctx, e.priority, [n_ir, c_ir])
            masked = self.select(act, prio, self.const(NEG_LARGE), REAL)
            best = IrReduce(masked, axis, "max", masked.md.remove_axis(axis).with_type(REAL))
            at_best = self.binary("==", masked, best, BOOL)
            frontier = self.binary("and", act, at_best, BOOL)

            repl = self.promote(self.inline(ctx, e.replace, [n_ir, c_ir]), "PolyExp")
            rc, rk = self.parts(repl)
            picked_c = self.select(frontier, rc, self.const(0.0), REAL)
            picked_k = self.select(frontier, rk, self.const(0.0), REAL)
            add_c = IrReduce(picked_c, axis, "sum", picked_c.md.remove_axis(axis).with_type(REAL))
            add_k = IrReduce(picked_k, axis, "sum", picked_k.md.remove_axis(axis).with_type(REAL))

            kept = self.select(frontier, self.const(0.0), c_ir, REAL)
            state_k = IrExtractPolyConst(st_var, st_md.const_meta())
            new_c = self.binary("+", kept, add_c, REAL)
            new_k = self.binary("+", state_k, add_k, REAL)
            new_state = IrCombineToPoly(
                new_c, new_k, new_k.md.with_type(POLYEXP).with_width(sv))
            self.emit(IrAssignment(st_name, new_state))
            _, _, act2 = self._traverse_live(ctx, e, IrVar(st_name, st_md))
            self.emit(IrAssignment(cont_name, self._any(act2)))
            body = seq(*list(body_stmts))

        cont_md = IrMetadata.of(BOOL, (ONE,), (ONE,))
        self.emit(IrWhile(IrVar(cont_name, cont_md), body, init))
        return IrVar(st_name, st_md)

    # -- arms and whole programs -------------------------------------------

    def finish_component(self, e: IrExpr, fty: Type) -> IrExpr:
        """Coerce one arm component to a materialized whole-layer value."""
        target = _layer_md(e.md.ty, CURR_SIZE)
        e = coerce(e, lcm_meta(e.md, target))
        if e.md.ty != fty:
            if not is_expression(fty):
                raise AnalysisError("component type %s does not fit field %s" % (e.md.ty, fty))
            e = self.promote(e, fty.name)
        return e

    def arm_stmt(self, ctx, rhs: S.Expr, ftypes: Tuple[Type, ...]) -> IrStmt:
        if isinstance(rhs, S.Ternary) and arm_has_tuple(rhs):
            with self.scope() as sc:
                cond = self.visit(ctx, rhs.cond)
                pre = list(sc)
            then_s = self.arm_stmt(ctx, rhs.then, ftypes)
            else_s = self.arm_stmt(ctx, rhs.other, ftypes)
            return seq(*pre, IrITE(cond, then_s, else_s))
        comps = rhs.items if isinstance(rhs, S.TupleExpr) else (rhs,)
        if len(comps) != len(ftypes):
            raise AnalysisError("arm yields %d components, shape has %d fields"
                                % (len(comps), len(ftypes)))
        with self.scope() as sc:
            vals = tuple(
                self.finish_component(self.visit(ctx, comp), fty)
                for comp, fty in zip(comps, ftypes)
            )
            return seq(*list(sc), IrReturn(vals))

    def compile(self, name: Optional[str] = None) -> IrProgram:
        if not self.program.flows:
            raise AnalysisError("program declares no flow")
        fl = self.program.flows[0]
        tr = self.program.transformer(fl.transformer)
        fields = tuple(self.checked.shape_fields)
        ftypes = tuple(self.checked.shape_fields.values())
        bodies: Dict[str, IrStmt] = {}
        for kind, rhs in tr.arms:
            prev_md = (_layer_md(NEURON.list_of(), PREV_SIZE) if kind == "Affine"
                       else _layer_md(NEURON, CURR_SIZE))
            ctx = {
                "curr": IrVar("curr", _layer_md(NEURON, CURR_SIZE)),
                "prev": IrVar("prev", prev_md),
            }
            bodies[kind.lower()] = self.arm_stmt(ctx, rhs, ftypes)
        prog = IrProgram(name or tr.name, fields, ftypes, bodies,
                         FlowIr(fl.direction, fl.transformer))
        validate_program(prog)
        return prog


def analyze_program(checked: CheckedProgram, name: Optional[str] = None) -> IrProgram:
    return Analyzer(checked).compile(name)
