"""Surface types and the promotion lattice.

Real promotes into either expression domain (as a constant part), a neuron
handle promotes into a polyhedral expression with unit coefficient, and a
noise symbol promotes into a symbolic expression.  The two expression
domains never mix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Type:
    name: str  # Real | Bool | Neuron | Sym | PolyExp | SymExp
    is_list: bool = False

    def list_of(self) -> "Type":
        return Type(self.name, True)

    def element(self) -> "Type":
        return Type(self.name, False)

    def __str__(self):
        return "List(%s)" % self.name if self.is_list else self.name


REAL = Type("Real")
BOOL = Type("Bool")
NEURON = Type("Neuron")
SYM = Type("Sym")
POLYEXP = Type("PolyExp")
SYMEXP = Type("SymExp")

SURFACE_TYPES = {
    "Float": REAL,
    "Int": REAL,
    "Bool": BOOL,
    "Neuron": NEURON,
    "Sym": SYM,
    "PolyExp": POLYEXP,
    "SymExp": SYMEXP,
}

# promotion edges: what each type may silently widen to
_PROMOTIONS = {
    "Real": {"Real", "PolyExp", "SymExp"},
    "Bool": {"Bool"},
    "Neuron": {"Neuron", "PolyExp"},
    "Sym": {"Sym", "SymExp"},
    "PolyExp": {"PolyExp"},
    "SymExp": {"SymExp"},
}


def assignable(src: Type, dst: Type) -> bool:
    if src.is_list or dst.is_list:
        return src == dst
    return dst.name in _PROMOTIONS[src.name]


def join(a: Type, b: Type) -> Optional[Type]:
    """Least type both promote to, or None."""
    if a == b:
        return a
    if a.is_list or b.is_list:
        return None
    common = _PROMOTIONS[a.name] & _PROMOTIONS[b.name]
    for name in ("Real", "Bool", "Neuron", "Sym", "PolyExp", "SymExp"):
        if name in common:
            return Type(name)
    return None


def is_expression(t: Type) -> bool:
    return t.name in ("PolyExp", "SymExp") and not t.is_list
