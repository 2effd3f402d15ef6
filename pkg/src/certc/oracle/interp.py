"""Reference interpreter: evaluates certifier specs neuron by neuron.

Runs the typed source program directly against a network, one neuron at a
time, with plain Python loops and dict-backed affine forms.  It shares no
code with the tensor pipeline, so the two can check each other.

Evaluation order is syntactic left to right, element selects evaluate both
branches, and tuple selects take only the chosen branch; noise symbols mint
one fresh id block per occurrence site and layer, shared across the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..frontend import syntax as S
from ..frontend.typecheck import CheckedProgram, arm_has_tuple
from ..frontend.types import POLYEXP, REAL, SYMEXP, Type
from ..run.network import InputSpec, Network
from .dense import (DensePoly, DenseSym, NeuronRef, NoiseRef, as_poly, as_sym,
                    safe_div, safe_max, safe_min)


class OracleError(RuntimeError):
    pass


@dataclass
class _Ctx:
    b: int
    j: int
    occ: int = 0  # noise mint occurrences so far in this neuron's evaluation


@dataclass
class OracleRun:
    network: Network
    shape_fields: Dict[str, Type]
    fields: List[Dict[str, list]]  # per layer: fname -> [batch][size] values
    sym_count: int

    def value(self, k: int, fname: str, b: int, j: int):
        return self.fields[k][fname][b][j]

    def real_field(self, k: int, fname: str) -> np.ndarray:
        if self.shape_fields[fname] != REAL:
            raise OracleError("field %r is not scalar" % fname)
        return np.array(self.fields[k][fname], dtype=float)

    def bounds(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.real_field(k, "l"), self.real_field(k, "u")

    def final_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.bounds(len(self.network.layers) - 1)


def _is_polyish(v) -> bool:
    return isinstance(v, (DensePoly, NeuronRef))


def _is_symish(v) -> bool:
    return isinstance(v, (DenseSym, NoiseRef))


def _as_float(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise OracleError("%s must be a number, got %r" % (what, v))
    return float(v)


class Oracle:
    """Interprets one checked program over one network."""

    def __init__(self, checked: CheckedProgram, network: Network):
        self.checked = checked
        self.program = checked.program
        self.net = network
        self.funcs = {f.name: f for f in self.program.funcs}
        flow = self.program.flows[0]
        self.transformer = self.program.transformer(flow.transformer)
        self.arms = dict(self.transformer.arms)
        self.fields: List[Dict[str, list]] = []
        self.sym_next = 0
        self._bases: List[int] = []
        self._mint_size = 0

    # -- driving ------------------------------------------------------------

    def run(self, spec: InputSpec) -> OracleRun:
        if spec.points.shape[1] != self.net.input_size:
            raise OracleError("input has %d values, network expects %d"
                              % (spec.points.shape[1], self.net.input_size))
        self.fields = [self._init_input(spec)]
        self.sym_next = self.net.input_size
        for k in range(1, len(self.net.layers)):
            self.fields.append(self._step_layer(k, spec.batch))
        return OracleRun(self.net, dict(self.checked.shape_fields),
                         self.fields, self.sym_next)

    def _init_input(self, spec: InputSpec) -> Dict[str, list]:
        lower, upper = spec.bounds()
        batch, size = lower.shape
        out: Dict[str, list] = {}
        for fname, fty in self.checked.shape_fields.items():
            vals = [[None] * size for _ in range(batch)]
            for b in range(batch):
                for j in range(size):
                    if fty == POLYEXP:
                        vals[b][j] = DensePoly(0.0, {j: 1.0})
                    elif fty == SYMEXP:
                        center = (lower[b, j] + upper[b, j]) / 2.0
                        radius = (upper[b, j] - lower[b, j]) / 2.0
                        vals[b][j] = DenseSym(center, {j: radius})
                    elif fty == REAL and fname == "l":
                        vals[b][j] = float(lower[b, j])
                    elif fty == REAL and fname == "u":
                        vals[b][j] = float(upper[b, j])
                    else:
                        raise OracleError(
                            "no input initialization rule for field %r of type %s"
                            % (fname, fty))
            out[fname] = vals
        return out

    def _step_layer(self, k: int, batch: int) -> Dict[str, list]:
        layer = self.net.layers[k]
        kind = "Relu" if layer.kind == "relu" else "Affine"
        if kind not in self.arms:
            raise OracleError("transformer %s has no %s arm"
                              % (self.transformer.name, kind))
        arm = self.arms[kind]
        off = self.net.offsets[k]
        prev_off = self.net.offsets[k - 1]
        prev_size = self.net.layers[k - 1].size
        if kind == "Affine":
            prev_val = [NeuronRef(prev_off + i) for i in range(prev_size)]
        fields = self.checked.shape_fields
        out = {fname: [[None] * layer.size for _ in range(batch)] for fname in fields}
        self._bases = []
        self._mint_size = layer.size
        for b in range(batch):
            for j in range(layer.size):
                ctx = _Ctx(b=b, j=j)
                env = {
                    "curr": NeuronRef(off + j),
                    "prev": prev_val if kind == "Affine" else NeuronRef(prev_off + j),
                }
                comps = self._eval_arm(arm, env, ctx)
                if len(comps) != len(fields):
                    raise OracleError("%s arm yields %d components, shape has %d"
                                      % (kind, len(comps), len(fields)))
                for (fname, fty), val in zip(fields.items(), comps):
                    out[fname][b][j] = self._coerce(val, fty, fname)
        return out

    def _coerce(self, val, fty: Type, fname: str):
        if fty == REAL:
            return _as_float(val, "field %r" % fname)
        if fty == POLYEXP:
            return as_poly(val)
        if fty == SYMEXP:
            return as_sym(val)
        raise OracleError("field %r has unsupported type %s" % (fname, fty))

    def _eval_arm(self, e: S.Expr, env: dict, ctx: _Ctx) -> tuple:
        # tuple selects branch lazily: the condition is uniform over a layer
        if isinstance(e, S.Ternary) and arm_has_tuple(e):
            cond = self._eval(e.cond, env, ctx)
            return self._eval_arm(e.then if cond else e.other, env, ctx)
        if isinstance(e, S.TupleExpr):
            return tuple(self._eval(item, env, ctx) for item in e.items)
        return (self._eval(e, env, ctx),)

    # -- expressions ---------------------------------------------------------

    def _eval(self, e: S.Expr, env: dict, ctx: _Ctx):
        if isinstance(e, S.RealLit):
            return float(e.value)
        if isinstance(e, S.BoolLit):
            return bool(e.value)
        if isinstance(e, S.SymMint):
            return self._mint(ctx)
        if isinstance(e, S.CurrRef):
            return env["curr"]
        if isinstance(e, S.PrevRef):
            return env["prev"]
        if isinstance(e, S.Var):
            if e.name not in env:
                raise OracleError("unbound name %r" % e.name)
            return env[e.name]
        if isinstance(e, S.Unary):
            v = self._eval(e.operand, env, ctx)
            if e.op == "not":
                return not v
            if _is_polyish(v):
                return as_poly(v).neg()
            if _is_symish(v):
                return as_sym(v).neg()
            return -_as_float(v, "negation operand")
        if isinstance(e, S.Binary):
            lhs = self._eval(e.lhs, env, ctx)
            rhs = self._eval(e.rhs, env, ctx)
            return self._binary(e.op, lhs, rhs)
        if isinstance(e, S.Ternary):
            # element select: both branches run, the condition picks one
            cond = self._eval(e.cond, env, ctx)
            then = self._eval(e.then, env, ctx)
            other = self._eval(e.other, env, ctx)
            return then if cond else other
        if isinstance(e, S.Call):
            return self._call_expr(e, env, ctx)
        if isinstance(e, S.Access):
            base = self._eval(e.base, env, ctx)
            if isinstance(base, list):
                return [self._field(nb, e.field, ctx) for nb in base]
            return self._field(base, e.field, ctx)
        if isinstance(e, S.MapCall):
            return self._map(e, env, ctx)
        if isinstance(e, S.DotCall):
            return self._dot(e, env, ctx)
        if isinstance(e, S.TraverseCall):
            return self._traverse(e, env, ctx)
        raise OracleError("cannot evaluate %r here" % type(e).__name__)

    def _binary(self, op: str, lhs, rhs):
        if op in ("and", "or"):
            if op == "and":
                return bool(lhs) and bool(rhs)
            return bool(lhs) or bool(rhs)
        if op in ("<=", ">=", "<", ">", "==", "!="):
            a = _as_float(lhs, "comparison operand")
            b = _as_float(rhs, "comparison operand")
            return {"<=": a <= b, ">=": a >= b, "<": a < b, ">": a > b,
                    "==": a == b, "!=": a != b}[op]
        if op in ("+", "-"):
            if _is_polyish(lhs) or _is_polyish(rhs):
                a, b = as_poly(lhs), as_poly(rhs)
            elif _is_symish(lhs) or _is_symish(rhs):
                a, b = as_sym(lhs), as_sym(rhs)
            else:
                a = _as_float(lhs, "operand")
                b = _as_float(rhs, "operand")
                return a + b if op == "+" else a - b
            return a.add(b) if op == "+" else a.sub(b)
        if op == "*":
            if _is_polyish(lhs):
                return as_poly(lhs).scale(_as_float(rhs, "scale factor"))
            if _is_symish(lhs):
                return as_sym(lhs).scale(_as_float(rhs, "scale factor"))
            if _is_polyish(rhs):
                return as_poly(rhs).scale(_as_float(lhs, "scale factor"))
            if _is_symish(rhs):
                return as_sym(rhs).scale(_as_float(lhs, "scale factor"))
            return _as_float(lhs, "factor") * _as_float(rhs, "factor")
        if op == "/":
            d = _as_float(rhs, "divisor")
            if _is_polyish(lhs):
                return as_poly(lhs).divide(d)
            if _is_symish(lhs):
                return as_sym(lhs).divide(d)
            return safe_div(_as_float(lhs, "dividend"), d)
        raise OracleError("unknown operator %r" % op)

    def _call_expr(self, e: S.Call, env: dict, ctx: _Ctx):
        if e.name in ("max", "min") and e.name not in self.funcs:
            a = _as_float(self._eval(e.args[0], env, ctx), "%s argument" % e.name)
            b = _as_float(self._eval(e.args[1], env, ctx), "%s argument" % e.name)
            return safe_max(a, b) if e.name == "max" else safe_min(a, b)
        fn = self.funcs.get(e.name)
        if fn is None:
            raise OracleError("unknown function %r" % e.name)
        args = [self._eval(a, env, ctx) for a in e.args]
        return self._call(fn, args, env, ctx)

    def _call(self, fn: S.FuncDef, args: list, env: dict, ctx: _Ctx):
        if len(args) != len(fn.params):
            raise OracleError("%s expects %d arguments, got %d"
                              % (fn.name, len(fn.params), len(args)))
        inner = {pname: val for (_, pname), val in zip(fn.params, args)}
        if "curr" in env:
            inner["curr"] = env["curr"]
        return self._eval(fn.body, inner, ctx)

    def _mint(self, ctx: _Ctx) -> NoiseRef:
        if ctx.occ == len(self._bases):
            self._bases.append(self.sym_next)
            self.sym_next += self._mint_size
        sid = self._bases[ctx.occ] + ctx.j
        ctx.occ += 1
        return NoiseRef(sid)

    # -- neuron fields --------------------------------------------------------

    def _field(self, base, fname: str, ctx: _Ctx):
        if not isinstance(base, NeuronRef):
            raise OracleError("field access needs a neuron, got %r" % (base,))
        k, idx = self.net.locate(base.nid)
        layer = self.net.layers[k]
        if fname == "layer":
            return float(k)
        if fname == "last_layer":
            return 1.0 if k == len(self.net.layers) - 1 else 0.0
        if fname == "bias":
            if layer.kind in ("affine", "conv"):
                return float(self.net.bias_vector(k)[idx])
            return 0.0
        if fname == "weight":
            if layer.kind not in ("affine", "conv"):
                raise OracleError("layer %d (%s) has no weights" % (k, layer.kind))
            return [float(w) for w in self.net.matrix(k)[idx]]
        if fname not in self.checked.shape_fields:
            raise OracleError("unknown field %r" % fname)
        # a not-yet-computed layer reads as zero of the field's type
        if k < len(self.fields):
            return self.fields[k][fname][ctx.b][idx]
        fty = self.checked.shape_fields[fname]
        if fty == REAL:
            return 0.0
        return DensePoly() if fty == POLYEXP else DenseSym()

    # -- aggregate operations --------------------------------------------------

    def _map(self, e: S.MapCall, env: dict, ctx: _Ctx):
        base = self._eval(e.base, env, ctx)
        fn = self.funcs[e.func]
        if isinstance(base, DensePoly):
            handle = NeuronRef
        elif isinstance(base, DenseSym):
            handle = NoiseRef
        else:
            raise OracleError("map needs an expression, got %r" % (base,))
        total = 0.0
        for key, coeff in base.items():
            r = self._call(fn, [handle(key), coeff], env, ctx)
            total = self._binary("+", total, r)
        return self._binary("+", total, base.const)

    def _dot(self, e: S.DotCall, env: dict, ctx: _Ctx):
        base = self._eval(e.base, env, ctx)
        arg = self._eval(e.arg, env, ctx)
        if not isinstance(base, list) or not isinstance(arg, list):
            raise OracleError("dot needs two lists")
        if len(base) != len(arg):
            raise OracleError("dot over %d elements with %d weights"
                              % (len(base), len(arg)))
        if not base:
            return 0.0
        if all(isinstance(v, NeuronRef) for v in base):
            return DensePoly(0.0, {v.nid: float(w) for v, w in zip(base, arg)})
        first = base[0]
        if isinstance(first, (DenseSym, NoiseRef)):
            out = DenseSym()
            for v, w in zip(base, arg):
                out = out.add(as_sym(v).scale(float(w)))
            return out
        if isinstance(first, DensePoly):
            out = DensePoly()
            for v, w in zip(base, arg):
                out = out.add(as_poly(v).scale(float(w)))
            return out
        return float(sum(_as_float(v, "dot element") * float(w)
                         for v, w in zip(base, arg)))

    def _traverse(self, e: S.TraverseCall, env: dict, ctx: _Ctx):
        state = as_poly(self._eval(e.base, env, ctx))
        prio_fn = self.funcs[e.priority]
        stop_fn = self.funcs[e.stop]
        repl_fn = self.funcs[e.replace]
        cap = 2 * len(self.net.layers) + 2
        for _ in range(cap):
            active = []
            for nid, coeff in state.items():
                if coeff == 0.0:
                    continue
                k, _ = self.net.locate(nid)
                if k <= 0:
                    # input neurons have no defining expression to substitute
                    continue
                if self._call(stop_fn, [NeuronRef(nid), coeff], env, ctx):
                    continue
                prio = _as_float(self._call(prio_fn, [NeuronRef(nid), coeff],
                                            env, ctx), "priority")
                active.append((nid, coeff, prio))
            if not active:
                return state
            best = max(prio for _, _, prio in active)
            out = DensePoly(state.const, state.coeffs)
            for nid, coeff, prio in active:
                if prio != best:
                    continue
                out.coeffs[nid] = 0.0
                repl = as_poly(self._call(repl_fn, [NeuronRef(nid), coeff],
                                          env, ctx))
                out.const += repl.const
                for key, val in repl.coeffs.items():
                    out.coeffs[key] = out.coeffs.get(key, 0.0) + val
            out.coeffs = {k2: v for k2, v in out.coeffs.items() if v != 0.0}
            state = out
        raise OracleError("substitution did not settle within %d rounds" % cap)


def run_oracle(checked: CheckedProgram, network: Network,
               spec: InputSpec) -> OracleRun:
    return Oracle(checked, network).run(spec)
