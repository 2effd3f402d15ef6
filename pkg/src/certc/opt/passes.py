"""Classic optimization passes over transformer bodies.

Works at statement granularity: common subexpression elimination inserts
named temporaries, loop-invariant code motion hoists whole assignments out
of substitution loops, copy propagation collapses variable aliases, and
dead code elimination drops unread assignments.

Two safety rules run through everything here:
- an expression that mints noise symbols (contains IrSym) is never
  deduplicated into a temporary, hoisted, or deleted, so the allocation
  order of noise columns is exactly the unoptimized one;
- a temporary is introduced only when none of its free variables is
  assigned anywhere in the enclosing scope, so a single evaluation at the
  insertion point sees the same environment every use would.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, Optional, Set, Tuple

from ..ir.nodes import (
    IrAssignment,
    IrExpr,
    IrITE,
    IrProgram,
    IrReturn,
    IrSeq,
    IrSkip,
    IrStmt,
    IrSym,
    IrVar,
    IrWhile,
    expr_children,
)

_MIN_TEMP_SIZE = 4


def _stmt_exprs(st: IrStmt) -> Tuple[IrExpr, ...]:
    if isinstance(st, IrAssignment):
        return (st.value,)
    if isinstance(st, IrITE):
        return (st.cond,)
    if isinstance(st, IrWhile):
        return (st.cond,)
    if isinstance(st, IrReturn):
        return st.values
    return ()


def _sub_stmts(st: IrStmt) -> Tuple[IrStmt, ...]:
    if isinstance(st, IrSeq):
        return st.stmts
    if isinstance(st, IrITE):
        return (st.then, st.other)
    if isinstance(st, IrWhile):
        return (st.init, st.body)
    return ()


def _walk_exprs(st: IrStmt):
    for e in _stmt_exprs(st):
        yield e
    for s in _sub_stmts(st):
        yield from _walk_exprs(s)


def _assigned_names(st: IrStmt, out: Set[str]) -> None:
    if isinstance(st, IrAssignment):
        out.add(st.name)
    for s in _sub_stmts(st):
        _assigned_names(s, out)


class _ExprInfo:
    """Per-node caches shared across one body's passes."""

    def __init__(self):
        self.free: Dict[int, frozenset] = {}
        self.size: Dict[int, int] = {}
        self.sym: Dict[int, bool] = {}

    def free_vars(self, e: IrExpr) -> frozenset:
        hit = self.free.get(id(e))
        if hit is not None:
            return hit
        if isinstance(e, IrVar):
            out = frozenset((e.name,))
        else:
            out = frozenset().union(*(self.free_vars(c) for c in expr_children(e))) \
                if expr_children(e) else frozenset()
        self.free[id(e)] = out
        return out

    def dag_size(self, e: IrExpr) -> int:
        hit = self.size.get(id(e))
        if hit is not None:
            return hit
        out = 1 + sum(self.dag_size(c) for c in expr_children(e))
        self.size[id(e)] = out
        return out

    def has_sym(self, e: IrExpr) -> bool:
        hit = self.sym.get(id(e))
        if hit is not None:
            return hit
        out = isinstance(e, IrSym) or any(self.has_sym(c) for c in expr_children(e))
        self.sym[id(e)] = out
        return out


# -- interning ----------------------------------------------------------------


class _Interner:
    """Hash-consing: structurally equal expressions become one object."""

    def __init__(self):
        self.table: Dict[tuple, IrExpr] = {}
        self.memo: Dict[int, IrExpr] = {}

    def intern(self, e: IrExpr) -> IrExpr:
        hit = self.memo.get(id(e))
        if hit is not None:
            return hit
        changes = {}
        key: List[object] = [type(e).__name__]
        for f in dataclasses.fields(e):
            v = getattr(e, f.name)
            if isinstance(v, IrExpr):
                nv = self.intern(v)
                if nv is not v:
                    changes[f.name] = nv
                key.append(id(nv))
            else:
                key.append(v)
        node = dataclasses.replace(e, **changes) if changes else e
        canon = self.table.setdefault(tuple(key), node)
        self.memo[id(e)] = canon
        return canon


def _intern_stmt(st: IrStmt, interner: _Interner) -> IrStmt:
    changes = {}
    for f in dataclasses.fields(st):
        v = getattr(st, f.name)
        if isinstance(v, IrExpr):
            nv = interner.intern(v)
            if nv is not v:
                changes[f.name] = nv
        elif isinstance(v, IrStmt):
            nv = _intern_stmt(v, interner)
            if nv is not v:
                changes[f.name] = nv
        elif isinstance(v, tuple) and v and isinstance(v[0], (IrExpr, IrStmt)):
            nv = tuple(
                interner.intern(x) if isinstance(x, IrExpr) else _intern_stmt(x, interner)
                for x in v
            )
            if any(a is not b for a, b in zip(nv, v)):
                changes[f.name] = nv
    return dataclasses.replace(st, **changes) if changes else st


# -- expression substitution ----------------------------------------------------


def _replace_exprs(e: IrExpr, table: Dict[int, IrExpr], memo: Dict[int, IrExpr]) -> IrExpr:
    hit = memo.get(id(e))
    if hit is not None:
        return hit
    direct = table.get(id(e))
    if direct is not None:
        memo[id(e)] = direct
        return direct
    changes = {}
    for f in dataclasses.fields(e):
        v = getattr(e, f.name)
        if isinstance(v, IrExpr):
            nv = _replace_exprs(v, table, memo)
            if nv is not v:
                changes[f.name] = nv
    node = dataclasses.replace(e, **changes) if changes else e
    memo[id(e)] = node
    return node


def _rewrite_stmt_exprs(st: IrStmt, table: Dict[int, IrExpr],
                        memo: Dict[int, IrExpr]) -> IrStmt:
    changes = {}
    for f in dataclasses.fields(st):
        v = getattr(st, f.name)
        if isinstance(v, IrExpr):
            nv = _replace_exprs(v, table, memo)
            if nv is not v:
                changes[f.name] = nv
        elif isinstance(v, IrStmt):
            nv = _rewrite_stmt_exprs(v, table, memo)
            if nv is not v:
                changes[f.name] = nv
        elif isinstance(v, tuple) and v and isinstance(v[0], (IrExpr, IrStmt)):
            nv = tuple(
                _replace_exprs(x, table, memo) if isinstance(x, IrExpr)
                else _rewrite_stmt_exprs(x, table, memo)
                for x in v
            )
            if any(a is not b for a, b in zip(nv, v)):
                changes[f.name] = nv
    return dataclasses.replace(st, **changes) if changes else st


# -- common subexpression elimination -------------------------------------------


class _TempNamer:
    def __init__(self):
        self.n = 0

    def fresh(self) -> str:
        name = "_c%d" % self.n
        self.n += 1
        return name


def _cse_seq(seq: IrSeq, bound: Set[str], info: _ExprInfo, namer: _TempNamer) -> IrSeq:
    # Recurse into nested scopes first so inner temps exist before counting.
    stmts = []
    inner_bound = set(bound)
    for st in seq.stmts:
        stmts.append(_cse_stmt(st, inner_bound, info, namer))
        if isinstance(st, IrAssignment):
            inner_bound.add(st.name)

    assigned: Set[str] = set()
    for st in stmts:
        _assigned_names(st, assigned)

    counts: Dict[int, int] = {}
    nodes: Dict[int, IrExpr] = {}
    for st in stmts:
        seen: Set[int] = set()
        for root in _walk_exprs(st):
            _count_unique(root, seen, nodes)
        for nid in seen:
            counts[nid] = counts.get(nid, 0) + 1

    candidates = []
    for nid, cnt in counts.items():
        if cnt < 2:
            continue
        e = nodes[nid]
        if isinstance(e, IrVar) or info.dag_size(e) < _MIN_TEMP_SIZE:
            continue
        if info.has_sym(e):
            continue
        fv = info.free_vars(e)
        if fv & assigned or not fv <= bound:
            continue
        candidates.append(e)
    if not candidates:
        return IrSeq(tuple(stmts))

    candidates.sort(key=info.dag_size)
    table: Dict[int, IrExpr] = {}
    temps: List[IrStmt] = []
    memo: Dict[int, IrExpr] = {}
    for e in candidates:
        value = _replace_exprs(e, table, memo)
        name = namer.fresh()
        temps.append(IrAssignment(name, value))
        table[id(e)] = IrVar(name, e.md)
    new_stmts = [_rewrite_stmt_exprs(st, table, memo) for st in stmts]
    return IrSeq(tuple(temps) + tuple(new_stmts))


def _count_unique(e: IrExpr, seen: Set[int], nodes: Dict[int, IrExpr]) -> None:
    if id(e) in seen:
        return
    seen.add(id(e))
    nodes[id(e)] = e
    for c in expr_children(e):
        _count_unique(c, seen, nodes)


def _cse_stmt(st: IrStmt, bound: Set[str], info: _ExprInfo, namer: _TempNamer) -> IrStmt:
    if isinstance(st, IrSeq):
        return _cse_seq(st, bound, info, namer)
    if isinstance(st, IrITE):
        return dataclasses.replace(
            st,
            then=_cse_stmt(st.then, set(bound), info, namer),
            other=_cse_stmt(st.other, set(bound), info, namer),
        )
    if isinstance(st, IrWhile):
        init_names: Set[str] = set()
        _assigned_names(st.init, init_names)
        body_bound = bound | init_names
        return dataclasses.replace(
            st,
            init=_cse_stmt(st.init, set(bound), info, namer),
            body=_cse_stmt(st.body, body_bound, info, namer),
        )
    return st


# -- loop-invariant code motion ---------------------------------------------------


def _licm_stmt(st: IrStmt, info: _ExprInfo, counts: Dict[str, int]) -> IrStmt:
    if isinstance(st, IrSeq):
        out: List[IrStmt] = []
        for inner in st.stmts:
            inner = _licm_stmt(inner, info, counts)
            if isinstance(inner, IrWhile):
                hoisted, inner = _hoist_from_while(inner, info, counts)
                out.extend(hoisted)
            out.append(inner)
        return IrSeq(tuple(out))
    if isinstance(st, IrITE):
        return dataclasses.replace(
            st,
            then=_licm_stmt(st.then, info, counts),
            other=_licm_stmt(st.other, info, counts),
        )
    if isinstance(st, IrWhile):
        return dataclasses.replace(
            st,
            init=_licm_stmt(st.init, info, counts),
            body=_licm_stmt(st.body, info, counts),
        )
    return st


def _hoist_from_while(w: IrWhile, info: _ExprInfo,
                      counts: Dict[str, int]) -> Tuple[List[IrStmt], IrWhile]:
    loop_assigned: Set[str] = set()
    _assigned_names(w.init, loop_assigned)
    _assigned_names(w.body, loop_assigned)
    if not isinstance(w.body, IrSeq):
        return [], w
    hoisted: List[IrStmt] = []
    kept: List[IrStmt] = []
    for st in w.body.stmts:
        if (
            isinstance(st, IrAssignment)
            and counts.get(st.name, 0) == 1
            and not info.has_sym(st.value)
            and not (info.free_vars(st.value) & loop_assigned)
        ):
            hoisted.append(st)
        else:
            kept.append(st)
    if not hoisted:
        return [], w
    return hoisted, dataclasses.replace(w, body=IrSeq(tuple(kept)))


# -- copy propagation and dead code elimination -----------------------------------


def _assignment_counts(st: IrStmt, out: Dict[str, int]) -> None:
    if isinstance(st, IrAssignment):
        out[st.name] = out.get(st.name, 0) + 1
    for s in _sub_stmts(st):
        _assignment_counts(s, out)


def _copy_prop(body: IrStmt, counts: Dict[str, int]) -> IrStmt:
    aliases: Dict[str, IrExpr] = {}

    def scan(st: IrStmt) -> None:
        if (
            isinstance(st, IrAssignment)
            and isinstance(st.value, IrVar)
            and counts.get(st.name, 0) == 1
            and counts.get(st.value.name, 0) <= 1
        ):
            aliases[st.name] = st.value
        for s in _sub_stmts(st):
            scan(s)

    scan(body)
    if not aliases:
        return body

    memo: Dict[int, IrExpr] = {}

    def subst(e: IrExpr) -> IrExpr:
        hit = memo.get(id(e))
        if hit is not None:
            return hit
        if isinstance(e, IrVar) and e.name in aliases:
            out = aliases[e.name]
        else:
            changes = {}
            for f in dataclasses.fields(e):
                v = getattr(e, f.name)
                if isinstance(v, IrExpr):
                    nv = subst(v)
                    if nv is not v:
                        changes[f.name] = nv
            out = dataclasses.replace(e, **changes) if changes else e
        memo[id(e)] = out
        return out

    def walk(st: IrStmt) -> IrStmt:
        changes = {}
        for f in dataclasses.fields(st):
            v = getattr(st, f.name)
            if isinstance(v, IrExpr):
                nv = subst(v)
                if nv is not v:
                    changes[f.name] = nv
            elif isinstance(v, IrStmt):
                nv = walk(v)
                if nv is not v:
                    changes[f.name] = nv
            elif isinstance(v, tuple) and v and isinstance(v[0], (IrExpr, IrStmt)):
                nv = tuple(subst(x) if isinstance(x, IrExpr) else walk(x) for x in v)
                if any(a is not b for a, b in zip(nv, v)):
                    changes[f.name] = nv
        return dataclasses.replace(st, **changes) if changes else st

    return walk(body)


def _read_names(body: IrStmt) -> Set[str]:
    out: Set[str] = set()

    def note(e: IrExpr, seen: Set[int]) -> None:
        if id(e) in seen:
            return
        seen.add(id(e))
        if isinstance(e, IrVar):
            out.add(e.name)
        for c in expr_children(e):
            note(c, seen)

    seen: Set[int] = set()
    def walk(st: IrStmt) -> None:
        for e in _stmt_exprs(st):
            note(e, seen)
        for s in _sub_stmts(st):
            walk(s)

    walk(body)
    return out


def _dce(body: IrStmt, info: _ExprInfo) -> IrStmt:
    for _ in range(10):
        read = _read_names(body)

        changed = False

        def walk(st: IrStmt) -> Optional[IrStmt]:
            nonlocal changed
            if isinstance(st, IrAssignment):
                if st.name not in read and not info.has_sym(st.value):
                    changed = True
                    return None
                return st
            if isinstance(st, IrSeq):
                kept = []
                for s in st.stmts:
                    ns = walk(s)
                    if ns is not None:
                        kept.append(ns)
                return IrSeq(tuple(kept))
            if isinstance(st, IrITE):
                return dataclasses.replace(
                    st, then=walk(st.then) or IrSkip(), other=walk(st.other) or IrSkip()
                )
            if isinstance(st, IrWhile):
                return dataclasses.replace(
                    st, init=walk(st.init) or IrSkip(), body=walk(st.body) or IrSkip()
                )
            return st

        body = walk(body) or IrSkip()
        if not changed:
            return body
    return body


# -- entry point -------------------------------------------------------------------


def classic_passes(prog: IrProgram) -> IrProgram:
    """CSE into temporaries, LICM, copy propagation, DCE; one round."""
    bodies = {}
    for kind, body in prog.bodies.items():
        info = _ExprInfo()
        namer = _TempNamer()
        body = _intern_stmt(body, _Interner())
        if isinstance(body, IrSeq):
            body = _cse_seq(body, {"curr", "prev"}, info, namer)
        counts: Dict[str, int] = {}
        _assignment_counts(body, counts)
        body = _licm_stmt(body, info, counts)
        counts = {}
        _assignment_counts(body, counts)
        body = _copy_prop(body, counts)
        body = _dce(body, info)
        bodies[kind] = body
    return dataclasses.replace(prog, bodies=bodies)
