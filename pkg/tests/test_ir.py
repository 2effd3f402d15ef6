"""Metadata algebra, alignment, and IR plumbing."""

from __future__ import annotations

import pytest

from certc.frontend.types import NEURON, POLYEXP, REAL, Type
from certc.ir import (
    BATCH_SIZE,
    CURR_SIZE,
    ONE,
    POLY_SIZE,
    IrAddDimension,
    IrBinary,
    IrConst,
    IrMetadata,
    IrMult,
    IrReduce,
    IrRepeat,
    IrVar,
    MetaElem,
    Named,
    ShapeError,
    align,
    coerce,
    dim_mul,
    fresh_shape_var,
    lcm_meta,
    print_expr,
    resolve,
    sym_eq,
    validate_expr,
)

M = Named("m")
N = Named("n")


def md(sigma, beta, ty=REAL):
    return IrMetadata.of(ty, sigma, beta)


def var(name, m):
    return IrVar(name, m)


class TestSymConst:
    def test_mul_canonical(self):
        assert dim_mul(M, ONE) == M
        assert dim_mul(ONE, ONE) == ONE
        assert dim_mul(M, N) == dim_mul(N, M)

    def test_resolve_product(self):
        assert resolve(dim_mul(M, N), {M: 3, N: 4}) == 12

    def test_shape_var_wildcard(self):
        sv = fresh_shape_var()
        assert sym_eq(sv, POLY_SIZE)
        assert sym_eq(POLY_SIZE, sv)
        assert not sym_eq(M, N)


class TestLcm:
    def test_broadcast_against_materialized(self):
        # sigma [1,n] x beta [m,1] meets sigma [m,n]: expand the first
        a = md([ONE, N], [M, ONE])
        b = md([M, N], [ONE, ONE])
        m = lcm_meta(a, b)
        assert m.flat_sigma() == (M, N)
        assert m.flat_beta() == (ONE, ONE)

    def test_transposed_broadcasts_fully_expand(self):
        a = md([M, ONE], [ONE, N])
        b = md([ONE, N], [M, ONE])
        m = lcm_meta(a, b)
        assert m.flat_sigma() == (M, N)
        assert m.flat_beta() == (ONE, ONE)

    def test_equal_metadata_kept_lazy(self):
        a = md([ONE, N], [M, ONE])
        b = md([ONE, N], [M, ONE])
        m = lcm_meta(a, b)
        assert m.flat_sigma() == (ONE, N)
        assert m.flat_beta() == (M, ONE)

    def test_incompatible_dims_rejected(self):
        with pytest.raises(ShapeError):
            lcm_meta(md([M], [ONE]), md([N], [ONE]))


class TestAlign:
    def test_repeat_emitted_only_where_needed(self):
        a = var("a", md([ONE, N], [M, ONE]))
        b = var("b", md([M, N], [ONE, ONE]))
        a2, b2, m = align(a, b)
        assert isinstance(a2, IrRepeat)
        assert a2.factors == (M, ONE)
        assert b2 is b

    def test_equal_operands_untouched(self):
        a = var("a", md([M, N], [ONE, ONE]))
        b = var("b", md([M, N], [ONE, ONE]))
        a2, b2, _ = align(a, b)
        assert a2 is a and b2 is b

    def test_leading_pad_for_matching_trailing_dim(self):
        # rank-1 [n] against [m,n]: the trailing dims line up, so the
        # vector gains a leading broadcast axis and a repeat by m
        a = var("a", md([N], [ONE]))
        b = var("b", md([M, N], [ONE, ONE]))
        a2, b2, m = align(a, b)
        assert m.effective() == (M, N)
        assert isinstance(a2, IrRepeat)
        inner = a2.arg
        assert isinstance(inner, IrAddDimension) and inner.axis == 0
        assert b2 is b

    def test_trailing_pad_preferred(self):
        a = var("a", md([BATCH_SIZE, N], [ONE, ONE]))
        b = var("b", md([BATCH_SIZE, N, POLY_SIZE], [ONE, ONE, ONE]))
        a2, _, m = align(a, b)
        assert m.effective() == (BATCH_SIZE, N, POLY_SIZE)
        assert isinstance(a2, IrRepeat)
        assert isinstance(a2.arg, IrAddDimension)
        assert a2.arg.axis == 2

    def test_scalar_constant_broadcast(self):
        c = IrConst(0.0, REAL, IrMetadata.scalar(REAL))
        b = var("b", md([BATCH_SIZE, CURR_SIZE], [ONE, ONE]))
        c2, b2, m = align(c, b)
        assert m.effective() == (BATCH_SIZE, CURR_SIZE)
        assert b2 is b
        assert c2.md.flat_sigma() == (BATCH_SIZE, CURR_SIZE)

    def test_shape_var_needs_no_repeat(self):
        sv = fresh_shape_var()
        a = var("a", md([BATCH_SIZE, N, sv], [ONE, ONE, ONE]))
        b = var("b", md([BATCH_SIZE, N, POLY_SIZE], [ONE, ONE, ONE]))
        a2, b2, m = align(a, b)
        assert a2 is a and b2 is b
        assert m.flat_sigma()[2] == POLY_SIZE


class TestStackMetadata:
    def _mapped(self):
        base = IrMetadata.of(POLYEXP, [BATCH_SIZE, CURR_SIZE], [ONE, ONE])
        pushed = base.compressed().pushed(
            MetaElem(NEURON, False, (POLY_SIZE,), (ONE,))
        )
        return base, pushed

    def test_push_and_flatten_bottom_first(self):
        base, pushed = self._mapped()
        assert pushed.height == 2
        assert pushed.flat_sigma() == (ONE, ONE, POLY_SIZE)
        assert pushed.flat_beta() == (BATCH_SIZE, CURR_SIZE, ONE)
        assert pushed.top_axis == 2

    def test_coeff_view_appends_to_the_top(self):
        base = IrMetadata.of(POLYEXP, [BATCH_SIZE, CURR_SIZE], [ONE, ONE])
        cm = base.coeff_meta()
        assert cm.flat_sigma() == (BATCH_SIZE, CURR_SIZE, POLY_SIZE)
        assert cm.ty == REAL

    def test_reduce_pops_an_exhausted_element(self):
        _, pushed = self._mapped()
        reduced = pushed.remove_axis(pushed.top_axis)
        assert reduced.height == 1
        assert reduced.flat_sigma() == (ONE, ONE)

    def test_running_example_shapes(self):
        # map of f(n, c) = c * n[L] over m polyexps of width n: the
        # intermediate effective shape is [m, n, n'], reduced in the middle
        e = IrMetadata.of(POLYEXP, [M], [ONE])
        c = e.pushed(MetaElem(REAL, False, (N,), (ONE,)))
        nid = e.compressed().pushed(MetaElem(NEURON, False, (N,), (ONE,)))
        assert c.flat_sigma() == (M, N)
        assert nid.flat_sigma() == (ONE, N)
        assert nid.flat_beta() == (M, ONE)
        body = nid.with_type(POLYEXP).coeff_meta()
        assert body.effective()[:2] == (M, N)
        assert body.rank == 3
        assert body.top_axis == 1

    def test_insert_boundary_joins_earlier_element(self):
        _, pushed = self._mapped()
        grown = pushed.insert_axis(pushed.rank, POLY_SIZE, ONE)
        assert grown.top.sigma == (POLY_SIZE, POLY_SIZE)
        assert grown.height == 2


class TestValidation:
    def test_aligned_binary_passes(self):
        a = var("a", md([ONE, N], [M, ONE]))
        b = var("b", md([M, N], [ONE, ONE]))
        a2, b2, m = align(a, b)
        node = IrBinary("+", a2, b2, m)
        assert validate_expr(node)

    def test_mismatched_binary_fails(self):
        a = var("a", md([M], [ONE]))
        b = var("b", md([M, N], [ONE, ONE]))
        node = IrBinary("+", a, b, b.md)
        with pytest.raises(Exception):
            validate_expr(node)

    def test_vacuous_repeat_rejected(self):
        a = var("a", md([M], [ONE]))
        node = IrRepeat(a, (ONE,), a.md)
        with pytest.raises(Exception):
            validate_expr(node)

    def test_reduce_rank_checked(self):
        base = IrMetadata.of(REAL, [M, N], [ONE, ONE])
        a = var("a", base)
        good = IrReduce(a, 1, "sum", base.remove_axis(1))
        assert validate_expr(good)

    def test_printer_one_node_per_line(self):
        a = var("a", md([M, N], [ONE, ONE]))
        b = var("b", md([M, N], [ONE, ONE]))
        node = IrMult(a, b, a.md)
        lines = print_expr(node)
        assert len(lines) == 3
        assert lines[0].startswith("(mult")
        assert all("{" in ln for ln in lines)
