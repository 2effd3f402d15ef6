"""IR expression and statement nodes.

Expressions are immutable trees; every node carries the metadata computed
for it by shape analysis.  Structural equality (and hashing) over whole
subtrees is what common-subexpression elimination keys on, so nodes that
must stay distinct at run time — noise-symbol mints — carry a serial
number.  Statements form straight-line sequences with branches and loops;
variables follow a dominance discipline rather than SSA: every read is
preceded by an assignment on all paths.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

from ..frontend.types import Type
from .metadata import IrMetadata
from .symconst import SymConst


@dataclass(frozen=True)
class IrExpr:
    pass


@dataclass(frozen=True)
class IrConst(IrExpr):
    value: float
    ty: Type
    md: IrMetadata


@dataclass(frozen=True)
class IrVar(IrExpr):
    name: str
    md: IrMetadata


@dataclass(frozen=True)
class IrSym(IrExpr):
    """Mints fresh noise symbols at execution; serial keeps nodes distinct."""

    serial: int
    md: IrMetadata


@dataclass(frozen=True)
class IrBinary(IrExpr):
    op: str  # + - / max min >= <= > < == != and or
    lhs: IrExpr
    rhs: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrMult(IrExpr):
    """Elementwise product; kept apart from IrBinary for rewrite matching."""

    lhs: IrExpr
    rhs: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrUnary(IrExpr):
    op: str  # neg | not
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrTernary(IrExpr):
    """Eager elementwise select: both branches evaluate, cond picks."""

    cond: IrExpr
    then: IrExpr
    other: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrDot(IrExpr):
    """List-of-neurons (or expression field list) contracted with weights."""

    lhs: IrExpr
    rhs: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrInnerProduct(IrExpr):
    """Batched matrix product ...mj,...jk->...mk (rewritten map-reduce)."""

    lhs: IrExpr
    rhs: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrClamp(IrExpr):
    arg: IrExpr
    lo: Optional[float]
    hi: Optional[float]
    md: IrMetadata


@dataclass(frozen=True)
class IrAddDimension(IrExpr):
    arg: IrExpr
    axis: int
    md: IrMetadata


@dataclass(frozen=True)
class IrAddDimensionConst(IrExpr):
    """Add a broadcast axis of a known symbolic size (coefficient widths)."""

    arg: IrExpr
    axis: int
    size: SymConst
    md: IrMetadata


@dataclass(frozen=True)
class IrRemoveDimension(IrExpr):
    arg: IrExpr
    axis: int
    md: IrMetadata


@dataclass(frozen=True)
class IrRepeat(IrExpr):
    """Tile per axis; factor One leaves an axis untouched."""

    arg: IrExpr
    factors: Tuple[SymConst, ...]
    md: IrMetadata


@dataclass(frozen=True)
class IrReduce(IrExpr):
    arg: IrExpr
    axis: int
    op: str  # sum | max | min
    md: IrMetadata


@dataclass(frozen=True)
class IrExtractPolyCoeff(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrExtractPolyConst(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrExtractSymCoeff(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrExtractSymConst(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrCombineToPoly(IrExpr):
    coeff: IrExpr
    const: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrCombineToSym(IrExpr):
    coeff: IrExpr
    const: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrConstToPoly(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrConstToSym(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrNeuronToPoly(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrNoiseToSym(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrMapNeuron(IrExpr):
    """Neuron handles of a polyhedral value's coefficient columns."""

    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrMapNoise(IrExpr):
    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrMapCoeff(IrExpr):
    """Coefficients viewed with the map axis pushed onto the stack."""

    arg: IrExpr
    md: IrMetadata


@dataclass(frozen=True)
class IrAccess(IrExpr):
    arg: IrExpr
    field: str
    md: IrMetadata


# -- statements ------------------------------------------------------------


@dataclass(frozen=True)
class IrStmt:
    pass


@dataclass(frozen=True)
class IrSkip(IrStmt):
    pass


@dataclass(frozen=True)
class IrAssignment(IrStmt):
    name: str
    value: IrExpr


@dataclass(frozen=True)
class IrSeq(IrStmt):
    stmts: Tuple[IrStmt, ...]


@dataclass(frozen=True)
class IrITE(IrStmt):
    """Branch on a layer-uniform condition; only one side executes."""

    cond: IrExpr
    then: IrStmt
    other: IrStmt


@dataclass(frozen=True)
class IrWhile(IrStmt):
    cond: IrExpr
    body: IrStmt
    init: IrStmt


@dataclass(frozen=True)
class IrReturn(IrStmt):
    values: Tuple[IrExpr, ...]


def seq(*stmts: IrStmt) -> IrStmt:
    """Flatten nested sequences and drop skips."""
    flat = []
    for s in stmts:
        if isinstance(s, IrSeq):
            flat.extend(s.stmts)
        elif not isinstance(s, IrSkip):
            flat.append(s)
    if not flat:
        return IrSkip()
    if len(flat) == 1:
        return flat[0]
    return IrSeq(tuple(flat))


# -- whole programs ----------------------------------------------------------


@dataclass(frozen=True)
class FlowIr:
    direction: str
    transformer: str


@dataclass(frozen=True)
class IrProgram:
    name: str
    fields: Tuple[str, ...]
    field_types: Tuple[Type, ...]
    bodies: Dict[str, IrStmt]  # layer kind ("affine" | "relu") -> body
    flow: FlowIr


# -- generic traversal -------------------------------------------------------


def expr_children(e: IrExpr) -> Tuple[IrExpr, ...]:
    out = []
    for f in dataclasses.fields(e):
        v = getattr(e, f.name)
        if isinstance(v, IrExpr):
            out.append(v)
    return tuple(out)


def replace_children(e: IrExpr, repl: Dict[str, IrExpr]) -> IrExpr:
    return dataclasses.replace(e, **repl)


def map_expr(e: IrExpr, fn) -> IrExpr:
    """Rebuild bottom-up, applying fn at every node."""
    repl = {}
    for f in dataclasses.fields(e):
        v = getattr(e, f.name)
        if isinstance(v, IrExpr):
            nv = map_expr(v, fn)
            if nv is not v:
                repl[f.name] = nv
    if repl:
        e = dataclasses.replace(e, **repl)
    return fn(e)


def walk_expr(e: IrExpr) -> Iterator[IrExpr]:
    yield e
    for c in expr_children(e):
        yield from walk_expr(c)


def stmt_exprs(s: IrStmt) -> Tuple[IrExpr, ...]:
    if isinstance(s, IrAssignment):
        return (s.value,)
    if isinstance(s, IrITE):
        return (s.cond,)
    if isinstance(s, IrWhile):
        return (s.cond,)
    if isinstance(s, IrReturn):
        return s.values
    return ()


def stmt_children(s: IrStmt) -> Tuple[IrStmt, ...]:
    if isinstance(s, IrSeq):
        return s.stmts
    if isinstance(s, IrITE):
        return (s.then, s.other)
    if isinstance(s, IrWhile):
        return (s.init, s.body)
    return ()


def walk_stmts(s: IrStmt) -> Iterator[IrStmt]:
    yield s
    for c in stmt_children(s):
        yield from walk_stmts(c)


def walk_all_exprs(s: IrStmt) -> Iterator[IrExpr]:
    for st in walk_stmts(s):
        for e in stmt_exprs(st):
            yield from walk_expr(e)
