"""IR optimizer: domain rewrites plus classic cleanup passes."""

from __future__ import annotations

import dataclasses

from ..ir.nodes import IrProgram, IrStmt, IrExpr
from ..ir.printer import dump_program
from .passes import classic_passes
from .rewrites import (
    DOMAIN_RULES,
    RewriteSession,
    rewrite_clamp,
    rewrite_matmul,
    rewrite_ternary,
)

_BUDGET = 10


def _rewrite_stmt(st: IrStmt, sess: RewriteSession) -> IrStmt:
    changes = {}
    for f in dataclasses.fields(st):
        v = getattr(st, f.name)
        if isinstance(v, IrExpr):
            nv = sess.rewrite(v)
            if nv is not v:
                changes[f.name] = nv
        elif isinstance(v, IrStmt):
            nv = _rewrite_stmt(v, sess)
            if nv is not v:
                changes[f.name] = nv
        elif isinstance(v, tuple) and v and isinstance(v[0], (IrExpr, IrStmt)):
            nv = tuple(
                sess.rewrite(x) if isinstance(x, IrExpr) else _rewrite_stmt(x, sess)
                for x in v
            )
            if any(a is not b for a, b in zip(nv, v)):
                changes[f.name] = nv
    return dataclasses.replace(st, **changes) if changes else st


def apply_rewrites(prog: IrProgram) -> IrProgram:
    """One bottom-up sweep of every domain rule over every body."""
    bodies = {}
    for kind, body in prog.bodies.items():
        sess = RewriteSession(DOMAIN_RULES)
        bodies[kind] = _rewrite_stmt(body, sess)
    return dataclasses.replace(prog, bodies=bodies)


def optimize(prog: IrProgram, rewrites: bool = True, classic: bool = True) -> IrProgram:
    """Iterate the enabled pass sets until the program stops changing."""
    if not rewrites and not classic:
        return prog
    before = dump_program(prog)
    for _ in range(_BUDGET):
        if rewrites:
            prog = apply_rewrites(prog)
        if classic:
            prog = classic_passes(prog)
        after = dump_program(prog)
        if after == before:
            break
        before = after
    return prog


__all__ = [
    "apply_rewrites",
    "classic_passes",
    "optimize",
    "rewrite_clamp",
    "rewrite_matmul",
    "rewrite_ternary",
]
