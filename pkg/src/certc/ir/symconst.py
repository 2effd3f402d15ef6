"""Symbolic dimension constants for tensor metadata.

Metadata dimensions are not integers: batch size, layer widths, and
coefficient widths are only known when a program runs against a concrete
network.  Dimensions are therefore small symbolic terms — named size
constants, loop-local shape variables, and flattened products — compared
structurally.  There is no algebraic solver; a ShapeVar acts as a wildcard
in equality checks and is bound to a concrete integer by the executor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Tuple


@dataclass(frozen=True)
class SymConst:
    """Base class for symbolic dimension terms."""


@dataclass(frozen=True)
class Named(SymConst):
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class ShapeVar(SymConst):
    """A loop-varying dimension, unique per traverse loop."""

    ident: int

    def __repr__(self):
        return "?%d" % self.ident


@dataclass(frozen=True)
class Mul(SymConst):
    factors: Tuple[SymConst, ...]

    def __repr__(self):
        return "*".join(repr(f) for f in self.factors)


ONE = Named("one")
BATCH_SIZE = Named("batch")
CURR_SIZE = Named("curr")
PREV_SIZE = Named("prev")
POLY_SIZE = Named("poly")
SYM_SIZE = Named("sym")

_SHORT = {"one": "1", "batch": "B", "curr": "n", "prev": "p", "poly": "q", "sym": "s"}

_shape_var_ids = itertools.count(1)


def fresh_shape_var() -> ShapeVar:
    return ShapeVar(next(_shape_var_ids))


def _sort_key(s: SymConst):
    if isinstance(s, Named):
        return (0, s.name, 0)
    if isinstance(s, ShapeVar):
        return (1, "", s.ident)
    return (2, repr(s), 0)


def dim_mul(a: SymConst, b: SymConst) -> SymConst:
    """Product of two dimensions, flattened and canonically sorted."""
    factors = []
    for term in (a, b):
        if isinstance(term, Mul):
            factors.extend(term.factors)
        elif term != ONE:
            factors.append(term)
    if not factors:
        return ONE
    if len(factors) == 1:
        return factors[0]
    return Mul(tuple(sorted(factors, key=_sort_key)))


def dim_product(dims: Iterable[SymConst]) -> SymConst:
    out: SymConst = ONE
    for d in dims:
        out = dim_mul(out, d)
    return out


def sym_eq(a: SymConst, b: SymConst) -> bool:
    """Structural equality with ShapeVar as a wildcard on either side."""
    if a == b:
        return True
    return isinstance(a, ShapeVar) or isinstance(b, ShapeVar)


def pick_concrete(a: SymConst, b: SymConst) -> SymConst:
    """Prefer a non-wildcard dimension when two are interchangeable."""
    return b if isinstance(a, ShapeVar) else a


def resolve(s: SymConst, binding: Mapping[SymConst, int]) -> int:
    """Evaluate a dimension term under a name -> integer binding."""
    if s == ONE:
        return 1
    if isinstance(s, Mul):
        out = 1
        for f in s.factors:
            out *= resolve(f, binding)
        return out
    if s in binding:
        return binding[s]
    raise KeyError("unbound dimension %r" % s)


def short(s: SymConst) -> str:
    """Compact rendering used by the IR printer."""
    if isinstance(s, Named):
        return _SHORT.get(s.name, s.name)
    if isinstance(s, ShapeVar):
        return "?%d" % s.ident
    if isinstance(s, Mul):
        return "*".join(short(f) for f in s.factors)
    return repr(s)
