"""Evaluates shape-analyzed tensor IR for one transformer arm.

The executor walks statement and expression nodes, producing block
tensors for Real and Bool computations, paired coefficient/constant
tensors for expression values, and range handles for neuron references.
Conditions of IrITE must be uniform across the layer (one branch runs);
IrTernary is a true elementwise select, so both branches are evaluated
everywhere and losing lanes are discarded, divisions in dead lanes
included.

Reductions whose argument would materialize more elements than the
chunk limit are evaluated in slabs along the reduced axis: elementwise
nodes stream through the slab evaluator while anything else is
materialized once and sliced.  This keeps the backsubstitution inner
product memory-bounded even with block structure disabled.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..ir import (
    BATCH_SIZE,
    CURR_SIZE,
    POLY_SIZE,
    PREV_SIZE,
    IrAccess,
    IrAddDimension,
    IrAddDimensionConst,
    IrAssignment,
    IrBinary,
    IrClamp,
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
    IrInnerProduct,
    IrITE,
    IrMapCoeff,
    IrMapNeuron,
    IrMapNoise,
    IrMetadata,
    IrMult,
    IrNeuronToPoly,
    IrNoiseToSym,
    IrRemoveDimension,
    IrRepeat,
    IrReduce,
    IrReturn,
    IrSeq,
    IrSkip,
    IrStmt,
    IrSym,
    IrTernary,
    IrUnary,
    IrVar,
    IrWhile,
    ShapeVar,
    SymConst,
    SYM_SIZE,
    resolve,
)
from ..sparse import (
    DenseBlock,
    Diagnostics,
    KernelBlock,
    RepeatBlock,
    SparseTensor,
    normalize,
    ops,
)
from .network import Network
from .values import (
    ExecError,
    NeuronsVal,
    PairVal,
    Value,
    WeightVal,
    identity_coeff,
    meet_widths,
    pad_width,
    zeros_pair,
)

# IR operator -> backend elementwise op
_OP = {"+": "add", "-": "sub", "/": "div", "max": "max", "min": "min",
       ">=": "ge", "<=": "le", ">": "gt", "<": "lt", "==": "eq", "!=": "ne",
       "and": "and", "or": "or"}

_NP_UNARY = {"neg": np.negative, "not": lambda a: (a == 0).astype(np.float64)}

DEFAULT_CHUNK_LIMIT = 1 << 24


class _Binding(dict):
    """Dimension binding where every loop-local ShapeVar means poly width."""

    def __contains__(self, key):  # consulted by resolve()
        return isinstance(key, ShapeVar) or super().__contains__(key)

    def __getitem__(self, key):
        if isinstance(key, ShapeVar) and not super().__contains__(key):
            return super().__getitem__(POLY_SIZE)
        return super().__getitem__(key)


class Executor:
    """Runs transformer arms against one network and one shared field store.

    fields[k] is None until layer k has been computed; fields[0] holds the
    input initialization.  The executor reads stored layers through curr,
    prev, and whole-range handles, and the driver writes each arm's results
    back before moving to the next layer.
    """

    def __init__(self, network: Network, field_types: Dict[str, object],
                 fields: List[Optional[Dict[str, Value]]], batch: int,
                 diag: Optional[Diagnostics] = None,
                 chunk_limit: int = DEFAULT_CHUNK_LIMIT):
        self.net = network
        self.field_types = field_types
        self.fields = fields
        self.batch = batch
        self.diag = diag if diag is not None else Diagnostics()
        self.chunk_limit = chunk_limit
        self.sym_count = network.input_size
        self.binding = _Binding({
            BATCH_SIZE: batch,
            POLY_SIZE: network.num_neurons,
            SYM_SIZE: self.sym_count,
        })
        sizes = network.layer_sizes()
        self._layer_row = np.repeat(np.arange(len(sizes), dtype=float), sizes)
        self._last_row = (np.arange(network.num_neurons)
                          >= network.offsets[-1]).astype(float)
        self._syms: Dict[int, PairVal] = {}
        self._memo: Dict[int, Value] = {}
        self._dense_memo: Dict[int, np.ndarray] = {}

    # -- arm entry ---------------------------------------------------------

    def run_arm(self, body: IrStmt, k: int) -> Tuple[Value, ...]:
        layer = self.net.layers[k]
        prev = self.net.layers[k - 1]
        self.binding[CURR_SIZE] = layer.size
        self.binding[PREV_SIZE] = prev.size
        self._syms = {}
        self._clear()
        env: Dict[str, Value] = {
            "curr": NeuronsVal("neuron", self.net.offsets[k], layer.size, k),
            "prev": NeuronsVal("neuron", self.net.offsets[k - 1], prev.size, k - 1),
        }
        out = self._exec(body, env)
        if out is None:
            raise ExecError("transformer arm finished without a result")
        return out

    def _clear(self) -> None:
        self._memo.clear()
        self._dense_memo.clear()

    def _resolve(self, s: SymConst) -> int:
        return resolve(s, self.binding)

    def _shape_of(self, md: IrMetadata) -> Tuple[int, ...]:
        return tuple(self._resolve(s) for s in md.flat_sigma())

    # -- statements ----------------------------------------------------------

    def _exec(self, st: IrStmt, env: Dict[str, Value]) -> Optional[Tuple[Value, ...]]:
        if isinstance(st, IrSkip):
            return None
        if isinstance(st, IrSeq):
            for inner in st.stmts:
                out = self._exec(inner, env)
                if out is not None:
                    return out
            return None
        if isinstance(st, IrAssignment):
            self._clear()
            self._premint(st.value)
            env[st.name] = self._eval(st.value, env)
            return None
        if isinstance(st, IrITE):
            self._clear()
            self._premint(st.cond)
            cond = self._eval(st.cond, env)
            return self._exec(st.then if self._uniform(cond, st.cond) else st.other, env)
        if isinstance(st, IrWhile):
            return self._exec_while(st, env)
        if isinstance(st, IrReturn):
            self._clear()
            for v in st.values:
                self._premint(v)
            return tuple(self._eval(v, env) for v in st.values)
        raise ExecError("cannot execute %r" % type(st).__name__)

    def _exec_while(self, st: IrWhile, env: Dict[str, Value]) -> None:
        self._exec(st.init, env)
        cap = 2 * len(self.net.layers) + 2
        rounds = 0
        while True:
            self._clear()
            self._premint(st.cond)
            cond = self._plain(self._eval(st.cond, env), st.cond)
            if not np.any(cond.to_dense() != 0.0):
                return None
            if rounds >= cap:
                raise ExecError("substitution did not settle within %d rounds" % cap)
            self._exec(st.body, env)
            rounds += 1

    def _uniform(self, v: Value, node: IrExpr) -> bool:
        arr = self._plain(v, node).to_dense()
        if arr.size == 0:
            return False
        first = arr.flat[0]
        if not np.all(arr == first):
            raise ExecError("branch condition is not uniform across the layer")
        return bool(first != 0.0)

    # -- expressions ---------------------------------------------------------

    def _eval(self, e: IrExpr, env: Dict[str, Value]) -> Value:
        key = id(e)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        out = self._eval_inner(e, env)
        self._memo[key] = out
        return out

    def _eval_inner(self, e: IrExpr, env: Dict[str, Value]) -> Value:
        if isinstance(e, IrConst):
            return normalize(SparseTensor.full((1,), e.value), self.diag)
        if isinstance(e, IrVar):
            try:
                return env[e.name]
            except KeyError:
                raise ExecError("unbound variable %r" % e.name)
        if isinstance(e, IrSym):
            return self._mint(e.serial)
        if isinstance(e, (IrBinary, IrMult)):
            op = "mul" if isinstance(e, IrMult) else _OP[e.op]
            a = self._plain(self._eval(e.lhs, env), e.lhs)
            b = self._plain(self._eval(e.rhs, env), e.rhs)
            a, b = self._meet(a, b)
            return ops.ewise(op, a, b, self.diag)
        if isinstance(e, IrUnary):
            t = self._plain(self._eval(e.arg, env), e.arg)
            return ops.unary(e.op, t, self.diag)
        if isinstance(e, IrTernary):
            c = self._plain(self._eval(e.cond, env), e.cond)
            a = self._plain(self._eval(e.then, env), e.then)
            b = self._plain(self._eval(e.other, env), e.other)
            c, a = self._meet(c, a)
            c, b = self._meet(c, b)
            a, b = self._meet(a, b)
            return ops.select(c, a, b, self.diag)
        if isinstance(e, IrClamp):
            t = self._plain(self._eval(e.arg, env), e.arg)
            return ops.clamp(t, e.lo, e.hi, self.diag)
        if isinstance(e, (IrAddDimension, IrAddDimensionConst)):
            return self._on_parts(self._eval(e.arg, env),
                                  lambda t: ops.add_dim(t, e.axis, self.diag))
        if isinstance(e, IrRemoveDimension):
            return self._on_parts(self._eval(e.arg, env),
                                  lambda t: ops.remove_dim(t, e.axis, self.diag))
        if isinstance(e, IrRepeat):
            return self._on_parts(self._eval(e.arg, env),
                                  lambda t: self._repeat(t, e.factors))
        if isinstance(e, IrReduce):
            return self._reduce(e, env)
        if isinstance(e, (IrExtractPolyCoeff, IrExtractSymCoeff, IrMapCoeff)):
            return self._pair(self._eval(e.arg, env), e.arg).coeff
        if isinstance(e, (IrExtractPolyConst, IrExtractSymConst)):
            return self._pair(self._eval(e.arg, env), e.arg).const
        if isinstance(e, IrCombineToPoly):
            return PairVal("PolyExp", self._plain(self._eval(e.coeff, env), e.coeff),
                           self._plain(self._eval(e.const, env), e.const)).check()
        if isinstance(e, IrCombineToSym):
            return PairVal("SymExp", self._plain(self._eval(e.coeff, env), e.coeff),
                           self._plain(self._eval(e.const, env), e.const)).check()
        if isinstance(e, IrConstToPoly):
            t = self._plain(self._eval(e.arg, env), e.arg)
            return PairVal("PolyExp", SparseTensor.zeros(t.shape + (self.net.num_neurons,)), t)
        if isinstance(e, IrConstToSym):
            t = self._plain(self._eval(e.arg, env), e.arg)
            return PairVal("SymExp", SparseTensor.zeros(t.shape + (self.sym_count,)), t)
        if isinstance(e, IrNeuronToPoly):
            return self._range_identity(e, env, "PolyExp")
        if isinstance(e, IrNoiseToSym):
            return self._range_identity(e, env, "SymExp")
        if isinstance(e, IrMapNeuron):
            return NeuronsVal("neuron", 0, self.net.num_neurons)
        if isinstance(e, IrMapNoise):
            pv = self._pair(self._eval(e.arg, env), e.arg)
            return NeuronsVal("noise", 0, pv.width)
        if isinstance(e, IrAccess):
            return self._access(e, env)
        if isinstance(e, IrDot):
            return self._dot(e, env)
        if isinstance(e, IrInnerProduct):
            a = self._plain(self._eval(e.lhs, env), e.lhs)
            b = self._plain(self._eval(e.rhs, env), e.rhs)
            return ops.matmul(a, b, self.diag)
        raise ExecError("cannot evaluate %r" % type(e).__name__)

    # -- value coercion helpers ----------------------------------------------

    def _plain(self, v: Value, node: IrExpr) -> SparseTensor:
        if isinstance(v, SparseTensor):
            return v
        raise ExecError("%s produced a %s where a tensor was required"
                        % (type(node).__name__, type(v).__name__))

    def _pair(self, v: Value, node: IrExpr) -> PairVal:
        if isinstance(v, PairVal):
            return v
        raise ExecError("%s produced a %s where an expression value was required"
                        % (type(node).__name__, type(v).__name__))

    def _on_parts(self, v: Value, fn) -> Value:
        if isinstance(v, PairVal):
            return PairVal(v.kind, fn(v.coeff), fn(v.const))
        if isinstance(v, SparseTensor):
            return fn(v)
        raise ExecError("shape node applied to a %s" % type(v).__name__)

    def _meet(self, a: SparseTensor, b: SparseTensor) -> Tuple[SparseTensor, SparseTensor]:
        """Align trailing identifier widths; any other mismatch is a bug."""
        if a.shape == b.shape:
            return a, b
        if a.rank == b.rank and a.shape[:-1] == b.shape[:-1]:
            a, b = meet_widths([a, b])
            return a, b
        raise ExecError("operand shapes %r and %r do not align" % (a.shape, b.shape))

    def _repeat(self, t: SparseTensor, factors: Tuple[SymConst, ...]) -> SparseTensor:
        for ax, f in enumerate(factors):
            k = self._resolve(f)
            if k != 1:
                t = ops.repeat(t, ax, k, self.diag)
        return t

    # -- minting and identity promotion ----------------------------------------

    def _premint(self, e: IrExpr) -> None:
        """Allocate noise columns for every mint site before evaluation.

        Widening nodes size themselves against the live noise count, so
        an operand evaluated before a sibling's mint would come out
        narrower than the mint-carrying side and its padding lanes would
        poison the combine.  Walking the tree in evaluation order keeps
        column ids identical to lazy allocation.
        """
        if isinstance(e, IrSym):
            self._mint(e.serial)
            return
        for f in dataclasses.fields(e):
            v = getattr(e, f.name)
            if isinstance(v, IrExpr):
                self._premint(v)

    def _mint(self, serial: int) -> PairVal:
        pv = self._syms.get(serial)
        if pv is None:
            b = self._resolve(BATCH_SIZE)
            c = self._resolve(CURR_SIZE)
            base = self.sym_count
            self.sym_count += c
            self.binding[SYM_SIZE] = self.sym_count
            coeff = identity_coeff((b, c), base, self.sym_count)
            pv = PairVal("SymExp", normalize(coeff, self.diag),
                         SparseTensor.zeros((b, c)))
            self._syms[serial] = pv
        return pv

    def _range_identity(self, e: IrExpr, env: Dict[str, Value], kind: str) -> PairVal:
        hv = self._eval(e.arg, env)
        if not isinstance(hv, NeuronsVal):
            raise ExecError("promotion of a %s to %s" % (type(hv).__name__, kind))
        shape = self._shape_of(e.md)
        prefix = shape[:-1] + (hv.count,)
        total = self.net.num_neurons if kind == "PolyExp" else max(self.sym_count, hv.count)
        coeff = normalize(identity_coeff(prefix, hv.start, total), self.diag)
        return PairVal(kind, coeff, SparseTensor.zeros(prefix))

    # -- field access and gathers ------------------------------------------------

    def _access(self, e: IrAccess, env: Dict[str, Value]) -> Value:
        base = self._eval(e.arg, env)
        if not isinstance(base, NeuronsVal):
            raise ExecError("field %r read from a %s" % (e.field, type(base).__name__))
        if base.domain == "noise":
            raise ExecError("noise terms carry no fields")
        if e.field == "weight":
            if base.layer is None:
                raise ExecError("weight is only defined for a single layer")
            return WeightVal(base.layer)
        if base.layer is not None:
            return self._layer_field(base.layer, e.field)
        return self._gather_all(e.field, e.md)

    def _layer_field(self, k: int, field: str) -> Value:
        b = self.batch
        size = self.net.layers[k].size
        if field == "layer":
            return normalize(SparseTensor.full((b, size), float(k)), self.diag)
        if field == "last_layer":
            flag = 1.0 if k == len(self.net.layers) - 1 else 0.0
            return normalize(SparseTensor.full((b, size), flag), self.diag)
        if field == "bias":
            if self.net.layers[k].kind in ("affine", "conv"):
                row = np.asarray(self.net.bias_vector(k), dtype=float)
                t = SparseTensor((b, size), 0.0,
                                 [((0, 0), RepeatBlock(row[None, :], (b, 1)))])
                return normalize(t, self.diag)
            return normalize(SparseTensor.zeros((b, size)), self.diag)
        fty = self.field_types.get(field)
        if fty is None:
            raise ExecError("unknown field %r" % field)
        stored = self.fields[k]
        if stored is not None and field in stored:
            return stored[field]
        return self._zero_field(fty, (b, size))

    def _zero_field(self, fty, prefix: Tuple[int, ...]) -> Value:
        name = getattr(fty, "name", str(fty))
        if name == "PolyExp":
            return zeros_pair("PolyExp", prefix, self.net.num_neurons)
        if name == "SymExp":
            return zeros_pair("SymExp", prefix, self.sym_count)
        return normalize(SparseTensor.zeros(prefix), self.diag)

    def _gather_all(self, field: str, md: IrMetadata) -> Value:
        """A field of every neuron, laid out per the access result metadata."""
        rank = md.rank
        b = self.batch
        total = self.net.num_neurons
        if field in ("layer", "last_layer"):
            row = self._layer_row if field == "layer" else self._last_row
            core = row.reshape((1,) * (rank - 1) + (total,))
            t = SparseTensor((b,) + (1,) * (rank - 2) + (total,), 0.0,
                             [((0,) * rank, RepeatBlock(core, (b,) + (1,) * (rank - 1)))])
            return normalize(t, self.diag)
        fty = self.field_types.get(field)
        if fty is None:
            raise ExecError("field %r is not readable across layers" % field)
        per_layer = [self._layer_field(k, field) for k in range(len(self.net.layers))]
        name = getattr(fty, "name", str(fty))
        if name in ("PolyExp", "SymExp"):
            consts = self._stack([v.const for v in per_layer], rank)
            coeffs = [v.coeff for v in per_layer]
            if name == "SymExp":
                coeffs = [pad_width(t, self.sym_count) for t in coeffs]
            coeff = self._stack(coeffs, rank + 1)
            return PairVal(name, coeff, consts).check()
        return self._stack(per_layer, rank)

    def _stack(self, parts: List[SparseTensor], rank: int) -> SparseTensor:
        """Concatenate per-layer tensors along the neuron axis, then insert
        broadcast axes until the handle layout rank is reached."""
        t = ops.concat(parts, 1, self.diag)
        while t.rank < rank:
            t = ops.add_dim(t, 1, self.diag)
        return t

    # -- dot -----------------------------------------------------------------

    def _weight_tensor(self, k: int, lead: int) -> SparseTensor:
        """The layer's weight matrix with a broadcast lead axis of extent lead."""
        layer = self.net.layers[k]
        if layer.kind == "conv":
            kb = KernelBlock(layer.kernel, (layer.stride, layer.stride),
                             (layer.padding, layer.padding), layer.in_shape,
                             lead_reps=(lead,))
            return normalize(SparseTensor((lead,) + kb.matrix_shape, 0.0,
                                          [((0, 0, 0), kb)]), self.diag)
        w = np.asarray(self.net.matrix(k), dtype=float)
        if lead == 1:
            block = DenseBlock(w[None])
        else:
            block = RepeatBlock(w[None], (lead, 1, 1))
        return normalize(SparseTensor((lead,) + w.shape, 0.0,
                                      [((0, 0, 0), block)]), self.diag)

    def _dot(self, e: IrDot, env: Dict[str, Value]) -> Value:
        lhs = self._eval(e.lhs, env)
        rhs = self._eval(e.rhs, env)
        if not isinstance(rhs, WeightVal):
            raise ExecError("dot expects layer weights on the right")
        k = rhs.layer
        b = self.batch
        size = self.net.layers[k].size
        if isinstance(lhs, NeuronsVal):
            if lhs.domain != "neuron" or lhs.layer is None:
                raise ExecError("dot needs a whole previous layer on the left")
            wt = self._weight_tensor(k, b)
            total = self.net.num_neurons
            coeff = SparseTensor((b, size, total), 0.0,
                                 [((0, 0, lhs.start), wt.blocks[0][1])])
            return PairVal("PolyExp", normalize(coeff, self.diag),
                           SparseTensor.zeros((b, size)))
        if isinstance(lhs, PairVal):
            wt = self._weight_tensor(k, 1)
            coeff = ops.matmul(wt, lhs.coeff, self.diag)
            kc = ops.add_dim(lhs.const, lhs.const.rank, self.diag)
            const = ops.remove_dim(ops.matmul(wt, kc, self.diag),
                                   kc.rank - 1, self.diag)
            return PairVal(lhs.kind, coeff, const).check()
        wt = self._weight_tensor(k, 1)
        vec = ops.add_dim(self._plain(lhs, e.lhs), lhs.rank, self.diag)
        return ops.remove_dim(ops.matmul(wt, vec, self.diag), vec.rank - 1, self.diag)

    # -- reductions, with slab evaluation for oversized arguments ---------------

    def _estimate(self, md: IrMetadata) -> int:
        n = 1
        for s in md.flat_sigma():
            n *= self._resolve(s)
        return n

    def _reduce(self, e: IrReduce, env: Dict[str, Value]) -> SparseTensor:
        if self._estimate(e.arg.md) > self.chunk_limit:
            return self._chunked_reduce(e, env)
        t = self._plain(self._eval(e.arg, env), e.arg)
        return ops.reduce(t, e.axis, e.op, self.diag)

    def _chunked_reduce(self, e: IrReduce, env: Dict[str, Value]) -> SparseTensor:
        n = self._resolve(e.arg.md.flat_sigma()[e.axis])
        rest = max(1, self._estimate(e.arg.md) // max(1, n))
        slab = max(1, self.chunk_limit // rest)
        np_red = {"sum": np.sum, "max": np.max, "min": np.min}[e.op]
        np_join = {"sum": np.add, "max": np.maximum, "min": np.minimum}[e.op]
        acc: Optional[np.ndarray] = None
        for lo in range(0, n, slab):
            arr = self._eval_slab(e.arg, e.axis, lo, min(n, lo + slab), env)
            part = np_red(arr, axis=e.axis)
            acc = part if acc is None else np_join(acc, part)
        self.diag.densify_fallbacks += 1
        return normalize(SparseTensor.dense(acc), self.diag)

    def _full_np(self, e: IrExpr, env: Dict[str, Value]) -> np.ndarray:
        arr = self._dense_memo.get(id(e))
        if arr is None:
            arr = self._plain(self._eval(e, env), e).to_dense()
            self._dense_memo[id(e)] = arr
        return arr

    def _slice_np(self, e: IrExpr, axis: int, lo: int, hi: int,
                  env: Dict[str, Value]) -> np.ndarray:
        arr = self._full_np(e, env)
        idx = [slice(None)] * arr.ndim
        idx[axis] = slice(lo, hi)
        return arr[tuple(idx)]

    def _np_meet(self, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if a.shape == b.shape:
            return a, b
        if a.ndim == b.ndim and a.shape[:-1] == b.shape[:-1]:
            w = max(a.shape[-1], b.shape[-1])

            def pad(x):
                if x.shape[-1] == w:
                    return x
                widths = [(0, 0)] * (x.ndim - 1) + [(0, w - x.shape[-1])]
                return np.pad(x, widths)

            return pad(a), pad(b)
        raise ExecError("operand shapes %r and %r do not align" % (a.shape, b.shape))

    def _eval_slab(self, e: IrExpr, axis: int, lo: int, hi: int,
                   env: Dict[str, Value]) -> np.ndarray:
        """Dense evaluation of e restricted to [lo, hi) along one axis."""
        if isinstance(e, (IrBinary, IrMult)):
            op = "mul" if isinstance(e, IrMult) else _OP[e.op]
            a = self._eval_slab(e.lhs, axis, lo, hi, env)
            b = self._eval_slab(e.rhs, axis, lo, hi, env)
            a, b = self._np_meet(a, b)
            return ops.apply_binop(op, a, b)
        if isinstance(e, IrUnary):
            return _NP_UNARY[e.op](self._eval_slab(e.arg, axis, lo, hi, env))
        if isinstance(e, IrTernary):
            c = self._eval_slab(e.cond, axis, lo, hi, env)
            a = self._eval_slab(e.then, axis, lo, hi, env)
            b = self._eval_slab(e.other, axis, lo, hi, env)
            c, a = self._np_meet(c, a)
            c, b = self._np_meet(c, b)
            a, b = self._np_meet(a, b)
            return np.where(c != 0.0, a, b)
        if isinstance(e, IrClamp):
            return np.clip(self._eval_slab(e.arg, axis, lo, hi, env), e.lo, e.hi)
        if isinstance(e, IrRepeat):
            factors = [self._resolve(f) for f in e.factors]
            if factors[axis] != 1 and self._resolve(e.arg.md.flat_sigma()[axis]) != 1:
                return self._slice_np(e, axis, lo, hi, env)
            if factors[axis] != 1:
                arr = self._eval_slab(e.arg, axis, 0, 1, env)
                factors[axis] = hi - lo
            else:
                arr = self._eval_slab(e.arg, axis, lo, hi, env)
                factors[axis] = 1
            if any(f != 1 for f in factors):
                arr = np.tile(arr, factors)
            return arr
        if isinstance(e, (IrAddDimension, IrAddDimensionConst)):
            if e.axis == axis:
                return self._slice_np(e, axis, lo, hi, env)
            inner = axis - 1 if e.axis < axis else axis
            return np.expand_dims(self._eval_slab(e.arg, inner, lo, hi, env), e.axis)
        if isinstance(e, IrRemoveDimension):
            inner = axis + 1 if e.axis <= axis else axis
            return np.squeeze(self._eval_slab(e.arg, inner, lo, hi, env), e.axis)
        if isinstance(e, IrReduce):
            inner = axis + 1 if e.axis <= axis else axis
            arr = self._eval_slab(e.arg, inner, lo, hi, env)
            np_red = {"sum": np.sum, "max": np.max, "min": np.min}[e.op]
            return np_red(arr, axis=e.axis)
        return self._slice_np(e, axis, lo, hi, env)
