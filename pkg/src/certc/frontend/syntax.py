"""AST for the certifier specification language."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple


@dataclass(frozen=True)
class Node:
    pass


# ---------------------------------------------------------------------------
# expressions

@dataclass(frozen=True)
class Expr(Node):
    pass


@dataclass(frozen=True)
class RealLit(Expr):
    value: float


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class CurrRef(Expr):
    pass


@dataclass(frozen=True)
class PrevRef(Expr):
    pass


@dataclass(frozen=True)
class SymMint(Expr):
    """`sym`: a fresh noise symbol per evaluation site."""
    pass


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # '-' | 'not'
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # + - * / and or >= <= > < == != In
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Ternary(Expr):
    cond: Expr
    then: Expr
    other: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str  # user func or builtin max/min
    args: Tuple[Expr, ...]


@dataclass(frozen=True)
class Access(Expr):
    base: Expr
    field: str


@dataclass(frozen=True)
class MapCall(Expr):
    base: Expr
    func: str


@dataclass(frozen=True)
class DotCall(Expr):
    base: Expr
    arg: Expr


@dataclass(frozen=True)
class TraverseCall(Expr):
    base: Expr
    direction: str  # 'forward' | 'backward'
    priority: str
    stop: str
    replace: str
    invariant: Optional[Expr] = None


@dataclass(frozen=True)
class TupleExpr(Expr):
    items: Tuple[Expr, ...]


# ---------------------------------------------------------------------------
# declarations

@dataclass(frozen=True)
class ShapeDecl(Node):
    fields: Tuple[Tuple[str, str], ...]  # (type name, field name)
    annotations: Tuple[Expr, ...]


@dataclass(frozen=True)
class FuncDef(Node):
    name: str
    params: Tuple[Tuple[str, str], ...]  # (type name, param name)
    body: Expr


@dataclass(frozen=True)
class Transformer(Node):
    name: str
    arms: Tuple[Tuple[str, Expr], ...]  # (layer kind, rhs expr or tuple)

    def arm(self, kind: str) -> Optional[Expr]:
        for k, e in self.arms:
            if k == kind:
                return e
        return None


@dataclass(frozen=True)
class FlowStmt(Node):
    direction: str
    priority: str
    stop: str
    transformer: str


@dataclass(frozen=True)
class Program(Node):
    shape: ShapeDecl
    funcs: Tuple[FuncDef, ...]
    transformers: Tuple[Transformer, ...]
    flows: Tuple[FlowStmt, ...]

    def func(self, name: str) -> FuncDef:
        for f in self.funcs:
            if f.name == name:
                return f
        raise KeyError(name)

    def transformer(self, name: str) -> Transformer:
        for t in self.transformers:
            if t.name == name:
                return t
        raise KeyError(name)
