"""Type checking for certifier programs.

Checks every function against its declared parameter types, infers return
types, and checks each transformer arm component against the shape field it
populates.  Inside an Affine arm `prev` is the list of source neurons;
inside a Relu arm it is the single source neuron.  `curr` is always the
neuron whose shape is being computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from . import syntax as S
from .types import (BOOL, NEURON, POLYEXP, REAL, SURFACE_TYPES, SYM, SYMEXP,
                    Type, assignable, is_expression, join)

BUILTIN_FIELDS = {
    "layer": REAL,
    "last_layer": REAL,
    "bias": REAL,
}

ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("<=", ">=", "<", ">", "==", "!=")
BOOL_OPS = ("and", "or")


class TypeError_(ValueError):
    pass


def arm_has_tuple(e: S.Expr) -> bool:
    """True when a transformer arm is tuple-shaped, possibly under ternaries."""
    if isinstance(e, S.TupleExpr):
        return True
    if isinstance(e, S.Ternary):
        return arm_has_tuple(e.then) or arm_has_tuple(e.other)
    return False


@dataclass
class FuncSig:
    params: Tuple[Tuple[Type, str], ...]
    ret: Type


@dataclass
class CheckedProgram:
    program: S.Program
    shape_fields: Dict[str, Type]
    func_sigs: Dict[str, FuncSig]
    arm_types: Dict[Tuple[str, str], Tuple[Type, ...]]  # (transformer, kind) -> component types


def _parse_type(word: str) -> Type:
    try:
        return SURFACE_TYPES[word]
    except KeyError:
        raise TypeError_("unknown type %r" % word)


class Checker:
    def __init__(self, program: S.Program):
        self.program = program
        self.shape_fields: Dict[str, Type] = {}
        for tyname, fname in program.shape.fields:
            if fname in self.shape_fields:
                raise TypeError_("duplicate shape field %r" % fname)
            self.shape_fields[fname] = _parse_type(tyname)
        self.func_sigs: Dict[str, FuncSig] = {}
        self._checking: set = set()

    # -- entry --------------------------------------------------------------

    def check(self) -> CheckedProgram:
        for f in self.program.funcs:
            self.func_sig(f.name)
        for annot in self.program.shape.annotations:
            self.check_annotation(annot)
        arm_types: Dict[Tuple[str, str], Tuple[Type, ...]] = {}
        for tr in self.program.transformers:
            for kind, rhs in tr.arms:
                prev_ty = NEURON if kind == "Relu" else NEURON.list_of()
                comps = self.check_arm(rhs, prev_ty)
                if len(comps) != len(self.shape_fields):
                    raise TypeError_(
                        "%s arm of %s yields %d components, shape has %d fields"
                        % (kind, tr.name, len(comps), len(self.shape_fields)))
                for ty, (fname, fty) in zip(comps, self.shape_fields.items()):
                    if not assignable(ty, fty):
                        raise TypeError_(
                            "%s arm of %s: component for %r has type %s, field is %s"
                            % (kind, tr.name, fname, ty, fty))
                arm_types[(tr.name, kind)] = comps
        for fl in self.program.flows:
            self.check_flow(fl)
        return CheckedProgram(self.program, dict(self.shape_fields),
                              dict(self.func_sigs), arm_types)

    def check_flow(self, fl: S.FlowStmt) -> None:
        self.program.transformer(fl.transformer)
        for fname, want_ret in ((fl.priority, REAL), (fl.stop, BOOL)):
            sig = self.func_sig(fname)
            if len(sig.params) != 1 or sig.params[0][0] != NEURON:
                raise TypeError_("flow function %r must take a single Neuron" % fname)
            if not assignable(sig.ret, want_ret):
                raise TypeError_("flow function %r must return %s" % (fname, want_ret))

    # -- functions ----------------------------------------------------------

    def func_sig(self, name: str) -> FuncSig:
        if name in self.func_sigs:
            return self.func_sigs[name]
        if name in self._checking:
            raise TypeError_("recursive function %r" % name)
        f = self.program.func(name)
        self._checking.add(name)
        params = tuple((_parse_type(ty), pname) for ty, pname in f.params)
        env = {pname: ty for ty, pname in params}
        ret = self.check_expr(f.body, env, prev_ty=None)
        self._checking.discard(name)
        sig = FuncSig(params, ret)
        self.func_sigs[name] = sig
        return sig

    # -- expressions --------------------------------------------------------

    def check_annotation(self, e: S.Expr) -> None:
        # verification annotations may compare expression-valued terms and
        # use In; they are specifications, not computations
        if isinstance(e, S.Binary) and e.op == "In":
            self.check_expr(e.lhs, {}, None, lenient_cmp=True)
            self.check_expr(e.rhs, {}, None, lenient_cmp=True)
            return
        self.check_expr(e, {}, None, lenient_cmp=True)

    def check_arm(self, rhs: S.Expr, prev_ty: Type) -> Tuple[Type, ...]:
        if isinstance(rhs, S.TupleExpr):
            return tuple(self.check_expr(it, {}, prev_ty) for it in rhs.items)
        if isinstance(rhs, S.Ternary):
            if arm_has_tuple(rhs):
                cty = self.check_expr(rhs.cond, {}, prev_ty)
                if cty != BOOL:
                    raise TypeError_("arm condition must be Bool, got %s" % cty)
                a = self.check_arm(rhs.then, prev_ty)
                b = self.check_arm(rhs.other, prev_ty)
                if len(a) != len(b):
                    raise TypeError_("arm branches yield different arity")
                out = []
                for x, y in zip(a, b):
                    j = join(x, y)
                    if j is None:
                        raise TypeError_("arm branches disagree: %s vs %s" % (x, y))
                    out.append(j)
                return tuple(out)
        ty = self.check_expr(rhs, {}, prev_ty)
        return (ty,)

    def check_expr(self, e: S.Expr, env: Dict[str, Type], prev_ty: Optional[Type],
                   lenient_cmp: bool = False) -> Type:
        rec = lambda x: self.check_expr(x, env, prev_ty, lenient_cmp)
        if isinstance(e, S.RealLit):
            return REAL
        if isinstance(e, S.BoolLit):
            return BOOL
        if isinstance(e, S.SymMint):
            return SYM
        if isinstance(e, S.CurrRef):
            return NEURON
        if isinstance(e, S.PrevRef):
            if prev_ty is None:
                raise TypeError_("prev is only available inside transformer arms")
            return prev_ty
        if isinstance(e, S.Var):
            if e.name in env:
                return env[e.name]
            raise TypeError_("unbound name %r" % e.name)
        if isinstance(e, S.Unary):
            t = rec(e.operand)
            if e.op == "-":
                if t in (REAL, POLYEXP, SYMEXP) or t in (NEURON, SYM):
                    return join(t, REAL) or t
                raise TypeError_("cannot negate %s" % t)
            if t != BOOL:
                raise TypeError_("not expects Bool, got %s" % t)
            return BOOL
        if isinstance(e, S.Binary):
            return self.check_binary(e, env, prev_ty, lenient_cmp)
        if isinstance(e, S.Ternary):
            cty = rec(e.cond)
            if cty != BOOL:
                raise TypeError_("condition must be Bool, got %s" % cty)
            a = rec(e.then)
            b = rec(e.other)
            j = join(a, b)
            if j is None:
                raise TypeError_("ternary branches disagree: %s vs %s" % (a, b))
            return j
        if isinstance(e, S.Call):
            if e.name in ("max", "min"):
                if len(e.args) != 2:
                    raise TypeError_("%s takes two arguments" % e.name)
                for a in e.args:
                    t = rec(a)
                    if t != REAL:
                        raise TypeError_("%s expects Real, got %s" % (e.name, t))
                return REAL
            sig = self.func_sig(e.name)
            if len(e.args) != len(sig.params):
                raise TypeError_("%s expects %d args, got %d"
                                 % (e.name, len(sig.params), len(e.args)))
            for a, (pty, pname) in zip(e.args, sig.params):
                aty = rec(a)
                if not assignable(aty, pty):
                    raise TypeError_("argument %r of %s: %s not assignable to %s"
                                     % (pname, e.name, aty, pty))
            return sig.ret
        if isinstance(e, S.Access):
            return self.check_access(e, env, prev_ty, lenient_cmp)
        if isinstance(e, S.MapCall):
            base = rec(e.base)
            sig = self.func_sig(e.func)
            if base == POLYEXP:
                want0 = NEURON
            elif base == SYMEXP:
                want0 = SYM
            else:
                raise TypeError_("map needs PolyExp or SymExp, got %s" % base)
            if len(sig.params) != 2 or sig.params[0][0] != want0 or sig.params[1][0] != REAL:
                raise TypeError_("map function %s must take (%s, Real)" % (e.func, want0))
            if sig.ret == REAL:
                return REAL
            if assignable(sig.ret, base):
                return base
            raise TypeError_("map function %s returns %s, incompatible with %s"
                             % (e.func, sig.ret, base))
        if isinstance(e, S.DotCall):
            base = rec(e.base)
            arg = rec(e.arg)
            if not base.is_list or not arg.is_list or arg.element() != REAL:
                raise TypeError_("dot needs a list against List(Real), got %s . %s"
                                 % (base, arg))
            elem = base.element()
            if elem == NEURON:
                return POLYEXP
            if elem in (POLYEXP, SYMEXP, REAL):
                return elem if elem != REAL else REAL
            raise TypeError_("dot cannot combine %s" % base)
        if isinstance(e, S.TraverseCall):
            base = rec(e.base)
            if base != POLYEXP:
                raise TypeError_("traverse needs PolyExp, got %s" % base)
            psig = self.func_sig(e.priority)
            ssig = self.func_sig(e.stop)
            rsig = self.func_sig(e.replace)
            for nm, sig2 in (("priority", psig), ("stop", ssig), ("replace", rsig)):
                if (len(sig2.params) != 2 or sig2.params[0][0] != NEURON
                        or sig2.params[1][0] != REAL):
                    raise TypeError_("traverse %s function must take (Neuron, Real)" % nm)
            if not assignable(psig.ret, REAL):
                raise TypeError_("traverse priority must return Real")
            if ssig.ret != BOOL:
                raise TypeError_("traverse stop must return Bool")
            if not assignable(rsig.ret, POLYEXP):
                raise TypeError_("traverse replace must return PolyExp-compatible")
            if e.invariant is not None:
                pass  # verification annotation, not computed
            return POLYEXP
        if isinstance(e, S.TupleExpr):
            raise TypeError_("tuple is only allowed as a transformer arm result")
        raise TypeError_("unhandled expression %r" % (e,))

    def check_binary(self, e: S.Binary, env, prev_ty, lenient_cmp) -> Type:
        rec = lambda x: self.check_expr(x, env, prev_ty, lenient_cmp)
        a = rec(e.lhs)
        b = rec(e.rhs)
        if e.op in BOOL_OPS:
            if a != BOOL or b != BOOL:
                raise TypeError_("%s expects Bool operands, got %s and %s" % (e.op, a, b))
            return BOOL
        if e.op in CMP_OPS:
            if lenient_cmp:
                return BOOL
            if a == REAL and b == REAL:
                return BOOL
            raise TypeError_("comparison needs Real operands, got %s and %s" % (a, b))
        if e.op == "In":
            if lenient_cmp:
                return BOOL
            raise TypeError_("In is only allowed in annotations")
        # arithmetic over the promotion lattice
        j = join(a, b)
        if j is None:
            raise TypeError_("cannot combine %s and %s with %s" % (a, b, e.op))
        if e.op in ("+", "-"):
            if j in (NEURON, SYM):
                j = POLYEXP if j == NEURON else SYMEXP
            return j
        if e.op == "*":
            if is_expression(a) and is_expression(b):
                raise TypeError_("product of two expressions is not linear")
            if a in (NEURON, SYM) and b in (NEURON, SYM):
                raise TypeError_("product of two symbols is not linear")
            if j in (NEURON, SYM):
                j = POLYEXP if j == NEURON else SYMEXP
            return j
        if e.op == "/":
            if b != REAL:
                raise TypeError_("divisor must be Real, got %s" % b)
            if a in (NEURON, SYM):
                return POLYEXP if a == NEURON else SYMEXP
            return a
        raise TypeError_("unknown operator %r" % e.op)

    def check_access(self, e: S.Access, env, prev_ty, lenient_cmp) -> Type:
        base = self.check_expr(e.base, env, prev_ty, lenient_cmp)
        if e.field == "weight":
            if base != NEURON:
                raise TypeError_("weight access needs a Neuron, got %s" % base)
            return REAL.list_of()
        if base.is_list:
            elem_ty = self.field_type(e.field)
            return elem_ty.list_of()
        if base == NEURON:
            return self.field_type(e.field)
        raise TypeError_("field access needs a neuron, got %s" % base)

    def field_type(self, field: str) -> Type:
        if field in self.shape_fields:
            return self.shape_fields[field]
        if field in BUILTIN_FIELDS:
            return BUILTIN_FIELDS[field]
        raise TypeError_("unknown field %r" % field)


def check_program(program: S.Program) -> CheckedProgram:
    return Checker(program).check()
