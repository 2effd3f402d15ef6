"""Stack-structured tensor metadata.

Every IR expression carries a stack of metadata elements <type, const,
sigma, beta>.  The bottom element describes the base value; each enclosing
`map` pushes one element for its iteration dimension, so stack height is
always one plus the map depth.  Per dimension, sigma is the physically
materialized extent and beta a pending broadcast multiplicity; the
effective extent is sigma * beta.  The flat tensor layout concatenates
element dimensions bottom first, which places map dimensions after the
base dimensions and the coefficient axis of an expression value last.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Tuple

from ..frontend.types import Type, join
from .symconst import (
    ONE,
    POLY_SIZE,
    SYM_SIZE,
    SymConst,
    dim_mul,
    pick_concrete,
    resolve,
    short,
    sym_eq,
)


class ShapeError(ValueError):
    """Raised when operand metadata cannot be reconciled."""


@dataclass(frozen=True)
class MetaElem:
    ty: Type
    const: bool
    sigma: Tuple[SymConst, ...]
    beta: Tuple[SymConst, ...]

    def __post_init__(self):
        if len(self.sigma) != len(self.beta) or not self.sigma:
            raise ShapeError("element needs matching, non-empty sigma/beta")

    @property
    def rank(self) -> int:
        return len(self.sigma)

    def effective(self) -> Tuple[SymConst, ...]:
        return tuple(dim_mul(s, b) for s, b in zip(self.sigma, self.beta))


@dataclass(frozen=True)
class IrMetadata:
    """Bottom-first element stack; elems[-1] is the innermost map level."""

    elems: Tuple[MetaElem, ...]
    # Coefficient-axis width for expression values; None means the default
    # (POLY_SIZE or SYM_SIZE by type).  Traverse loop states override it
    # with a loop-local ShapeVar.
    width: Optional[SymConst] = None

    # -- basic views ----------------------------------------------------

    @property
    def top(self) -> MetaElem:
        return self.elems[-1]

    @property
    def ty(self) -> Type:
        return self.elems[-1].ty

    @property
    def height(self) -> int:
        return len(self.elems)

    @property
    def rank(self) -> int:
        return sum(e.rank for e in self.elems)

    @property
    def top_axis(self) -> int:
        """Flat index of the top element's first dimension."""
        return self.rank - self.top.rank

    def flat_sigma(self) -> Tuple[SymConst, ...]:
        return tuple(s for e in self.elems for s in e.sigma)

    def flat_beta(self) -> Tuple[SymConst, ...]:
        return tuple(b for e in self.elems for b in e.beta)

    def effective(self) -> Tuple[SymConst, ...]:
        return tuple(d for e in self.elems for d in e.effective())

    def const_all(self) -> bool:
        return all(e.const for e in self.elems)

    def is_expanded(self) -> bool:
        return all(b == ONE for b in self.flat_beta())

    def partition(self) -> Tuple[int, ...]:
        return tuple(e.rank for e in self.elems)

    def coeff_width(self) -> SymConst:
        if self.width is not None:
            return self.width
        return SYM_SIZE if self.ty.name == "SymExp" else POLY_SIZE

    def eval_shape(self, binding: Mapping[SymConst, int]) -> Tuple[int, ...]:
        return tuple(resolve(s, binding) for s in self.flat_sigma())

    def eval_effective(self, binding: Mapping[SymConst, int]) -> Tuple[int, ...]:
        return tuple(resolve(s, binding) for s in self.effective())

    # -- constructors ---------------------------------------------------

    @staticmethod
    def scalar(ty: Type, const: bool = True) -> "IrMetadata":
        return IrMetadata((MetaElem(ty, const, (ONE,), (ONE,)),))

    @staticmethod
    def of(ty: Type, sigma, beta, const: bool = False) -> "IrMetadata":
        return IrMetadata((MetaElem(ty, const, tuple(sigma), tuple(beta)),))

    # -- rebuilding helpers ----------------------------------------------

    def with_type(self, ty: Type) -> "IrMetadata":
        return replace(self, elems=self.elems[:-1] + (replace(self.top, ty=ty),))

    def with_width(self, width: Optional[SymConst]) -> "IrMetadata":
        return replace(self, width=width)

    def pushed(self, elem: MetaElem) -> "IrMetadata":
        return IrMetadata(self.elems + (elem,), None)

    def popped(self) -> "IrMetadata":
        if len(self.elems) == 1:
            raise ShapeError("cannot pop the base element")
        return IrMetadata(self.elems[:-1], self.width)

    def compressed(self) -> "IrMetadata":
        """Move every extent into beta: sigma all One, beta = effective."""
        elems = tuple(
            replace(e, sigma=(ONE,) * e.rank, beta=e.effective()) for e in self.elems
        )
        return IrMetadata(elems, self.width)

    def coeff_meta(self) -> "IrMetadata":
        """Metadata of the coefficient part: trailing width axis, Real."""
        w = self.coeff_width()
        top = self.top
        new_top = MetaElem(Type("Real"), top.const, top.sigma + (w,), top.beta + (ONE,))
        return IrMetadata(self.elems[:-1] + (new_top,), None)

    def const_meta(self) -> "IrMetadata":
        return self.with_type(Type("Real")).with_width(None)

    def insert_axis(self, pos: int, sigma: SymConst, beta: SymConst) -> "IrMetadata":
        """Insert a dimension at flat position pos.

        A boundary position joins the earlier element's tail, except
        position 0 which prepends to the base element.
        """
        if not 0 <= pos <= self.rank:
            raise ShapeError("axis %d out of range" % pos)
        elems = list(self.elems)
        if pos == 0:
            e = elems[0]
            elems[0] = replace(e, sigma=(sigma,) + e.sigma, beta=(beta,) + e.beta)
            return IrMetadata(tuple(elems), self.width)
        start = 0
        for i, e in enumerate(elems):
            end = start + e.rank
            if pos <= end:
                k = pos - start
                elems[i] = replace(
                    e,
                    sigma=e.sigma[:k] + (sigma,) + e.sigma[k:],
                    beta=e.beta[:k] + (beta,) + e.beta[k:],
                )
                return IrMetadata(tuple(elems), self.width)
            start = end
        raise ShapeError("unreachable axis %d" % pos)

    def remove_axis(self, pos: int) -> "IrMetadata":
        """Drop a dimension; an emptied non-base element is popped."""
        if not 0 <= pos < self.rank:
            raise ShapeError("axis %d out of range" % pos)
        elems = list(self.elems)
        start = 0
        for i, e in enumerate(elems):
            end = start + e.rank
            if pos < end:
                k = pos - start
                sigma = e.sigma[:k] + e.sigma[k + 1 :]
                beta = e.beta[:k] + e.beta[k + 1 :]
                if sigma:
                    elems[i] = replace(e, sigma=sigma, beta=beta)
                elif len(elems) > 1:
                    del elems[i]
                else:
                    # the base element never vanishes; keep a unit dim
                    elems[i] = replace(e, sigma=(ONE,), beta=(ONE,))
                return IrMetadata(tuple(elems), self.width)
            start = end
        raise ShapeError("unreachable axis %d" % pos)

    def axis_dims(self, pos: int) -> Tuple[SymConst, SymConst]:
        return self.flat_sigma()[pos], self.flat_beta()[pos]

    def repartition(self, part: Tuple[int, ...], like: "IrMetadata") -> "IrMetadata":
        """Regroup flat dims under a partition, copying element types."""
        if sum(part) != self.rank or len(part) != len(like.elems):
            raise ShapeError("partition does not cover the metadata")
        sig, bet = self.flat_sigma(), self.flat_beta()
        elems = []
        start = 0
        for width, owner in zip(part, like.elems):
            elems.append(
                MetaElem(owner.ty, owner.const, sig[start : start + width], bet[start : start + width])
            )
            start += width
        return IrMetadata(tuple(elems), self.width)

    def describe(self) -> str:
        sig = "|".join(",".join(short(s) for s in e.sigma) for e in self.elems)
        bet = "|".join(",".join(short(b) for b in e.beta) for e in self.elems)
        base = "%s %s" % (self.ty, sig)
        if any(b != ONE for b in self.flat_beta()):
            base += "^" + bet
        if self.width is not None:
            base += " w=" + short(self.width)
        return base


# -- alignment arithmetic -------------------------------------------------


def _compat(a: SymConst, b: SymConst) -> bool:
    return sym_eq(a, b) or a == ONE or b == ONE


def pad_strategy(small: IrMetadata, big: IrMetadata) -> str:
    """How to rank-pad the smaller operand: trailing append or leading."""
    es, eb = small.effective(), big.effective()
    diff = len(eb) - len(es)
    if diff <= 0:
        raise ShapeError("pad_strategy needs a strictly smaller operand")
    if all(_compat(es[i], eb[i]) for i in range(len(es))):
        return "trailing"
    if all(_compat(es[i], eb[i + diff]) for i in range(len(es))):
        return "leading"
    raise ShapeError(
        "cannot pad %s against %s" % (small.describe(), big.describe())
    )


def _virtual_pad(m: IrMetadata, other: IrMetadata) -> IrMetadata:
    """Metadata m as it will look after rank padding against other."""
    out = m
    while out.rank < other.rank:
        how = pad_strategy(out, other)
        if how == "trailing":
            pos = out.rank
            out = out.insert_axis(pos, ONE, other.effective()[pos])
        else:
            out = out.insert_axis(0, ONE, other.effective()[0])
    return out


def lcm_dims(d1, d2) -> Tuple[SymConst, SymConst]:
    """Least-common metadata of one dimension pair."""
    s1, b1 = d1
    s2, b2 = d2
    if s1 == s2 and b1 == b2:
        return pick_concrete(s1, s2), pick_concrete(b1, b2)
    e1, e2 = dim_mul(s1, b1), dim_mul(s2, b2)
    if e1 == ONE:
        return s2, b2
    if e2 == ONE:
        return s1, b1
    if sym_eq(e1, e2):
        return pick_concrete(e1, e2), ONE
    raise ShapeError("dimensions %r and %r do not align" % (d1, d2))


def lcm_meta(m1: IrMetadata, m2: IrMetadata) -> IrMetadata:
    """Least-common metadata of two operands, after virtual rank padding."""
    a = _virtual_pad(m1, m2) if m1.rank < m2.rank else m1
    b = _virtual_pad(m2, m1) if m2.rank < m1.rank else m2
    dims = [
        lcm_dims(a.axis_dims(i), b.axis_dims(i)) for i in range(a.rank)
    ]
    owner = b if b.height > a.height else a
    part = owner.partition()
    if sum(part) != len(dims):
        part = (len(dims),)
        owner = IrMetadata(
            (MetaElem(owner.ty, owner.const_all(), tuple(d[0] for d in dims), tuple(d[1] for d in dims)),)
        )
    sig = tuple(d[0] for d in dims)
    bet = tuple(d[1] for d in dims)
    elems = []
    start = 0
    other = b if owner is a else a
    for width, oe in zip(part, owner.elems):
        ty = oe.ty
        elems.append(
            MetaElem(ty, oe.const and other.const_all(), sig[start : start + width], bet[start : start + width])
        )
        start += width
    top_ty = join(m1.ty, m2.ty) or owner.ty
    out = IrMetadata(tuple(elems))
    if out.ty != top_ty:
        out = out.with_type(top_ty)
    return out


def repeat_factors(m_from: IrMetadata, m_to: IrMetadata) -> Tuple[SymConst, ...]:
    """Per-axis tile factors taking a padded operand's sigma to m_to's."""
    if m_from.rank != m_to.rank:
        raise ShapeError("rank mismatch in repeat_factors")
    out = []
    for i in range(m_to.rank):
        s_op, _ = m_from.axis_dims(i)
        s_res, _ = m_to.axis_dims(i)
        if s_op == s_res:
            out.append(ONE)
        elif s_op == ONE:
            # a unit axis always tiles, even into a loop-local width
            out.append(s_res)
        elif sym_eq(s_op, s_res):
            out.append(ONE)
        else:
            raise ShapeError(
                "axis %d: cannot repeat %r into %r" % (i, s_op, s_res)
            )
    return tuple(out)


def meta_compatible(m1: IrMetadata, m2: IrMetadata) -> bool:
    """Loose equality: same rank and pairwise sym-equal effective dims."""
    if m1.rank != m2.rank:
        return False
    return all(sym_eq(a, b) for a, b in zip(m1.effective(), m2.effective()))
