"""Randomized differential tests: block tensor ops vs plain numpy.

Elementwise ops must match bitwise (they never reorder arithmetic);
matmul and reduce may reassociate, so they get a 1e-12 relative budget.
"""

from __future__ import annotations

import numpy as np
import pytest

from certc.sparse import (ConstBlock, DenseBlock, DiagonalBlock, Diagnostics,
                          KernelBlock, PatchesBlock, RepeatBlock, SparseTensor,
                          dense_mode, ops)
from certc.sparse.ops import apply_binop

EWISE_OPS = ["add", "sub", "mul", "div", "max", "min",
             "ge", "gt", "le", "lt", "eq", "ne", "and", "or"]


def rel_err(got: np.ndarray, ref: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(ref))) if ref.size else 1.0)
    return float(np.max(np.abs(got - ref))) / scale if ref.size else 0.0


def _divisors(n):
    return [d for d in range(1, n + 1) if n % d == 0]


def random_block(rng: np.random.Generator, ext, allow_diag=True):
    kinds = ["dense", "const", "repeat"]
    diag_pairs = [d for d in range(len(ext) - 1) if ext[d] == ext[d + 1]]
    if allow_diag and diag_pairs:
        kinds.append("diag")
    kind = kinds[rng.integers(len(kinds))]
    if kind == "dense":
        return DenseBlock(np.round(rng.normal(size=ext), 3))
    if kind == "const":
        return ConstBlock(float(rng.choice([0.0, 1.0, -2.5, 0.75])), tuple(ext))
    if kind == "repeat":
        reps = tuple(int(rng.choice(_divisors(n))) for n in ext)
        core = np.round(rng.normal(size=tuple(n // r for n, r in zip(ext, reps))), 3)
        return RepeatBlock(core, reps)
    delta = int(rng.choice(diag_pairs))
    core_shape = tuple(ext[:delta + 1] + ext[delta + 2:])
    return DiagonalBlock(np.round(rng.normal(size=core_shape), 3), delta)


def random_tensor(rng: np.random.Generator, shape=None, max_blocks=3,
                  bg_choices=(0.0, 0.0, 0.0, 1.5, -1.0)) -> SparseTensor:
    if shape is None:
        rank = int(rng.integers(2, 5))
        shape = tuple(int(rng.integers(1, 6)) for _ in range(rank))
    shape = tuple(shape)
    nblocks = int(rng.integers(0, max_blocks + 1))
    nblocks = min(nblocks, shape[0])
    bg = float(rng.choice(bg_choices))
    blocks = []
    if nblocks:
        cuts = sorted(rng.choice(shape[0] + 1, size=nblocks - 1, replace=True)) if nblocks > 1 else []
        bounds = [0] + [int(c) for c in cuts] + [shape[0]]
        for i in range(nblocks):
            lo, hi = bounds[i], bounds[i + 1]
            if hi <= lo:
                continue
            seg = int(rng.integers(1, hi - lo + 1))
            off0 = lo + int(rng.integers(0, hi - lo - seg + 1))
            start = [off0]
            ext = [seg]
            for n in shape[1:]:
                e = int(rng.integers(1, n + 1))
                s = int(rng.integers(0, n - e + 1))
                start.append(s)
                ext.append(e)
            allow_diag = len(blocks) >= 0
            blocks.append((tuple(start), random_block(rng, tuple(ext), allow_diag)))
    t = SparseTensor(shape, bg, blocks)
    t.validate()
    return t


def test_roundtrip_and_validate():
    rng = np.random.default_rng(11)
    for _ in range(300):
        t = random_tensor(rng)
        arr = t.to_dense()
        back = SparseTensor.from_dense(arr)
        back.validate()
        assert np.array_equal(back.to_dense(), arr)


def test_kernel_matrix_matches_dense():
    rng = np.random.default_rng(12)
    for _ in range(40):
        ic = int(rng.integers(1, 3))
        oc = int(rng.integers(1, 3))
        ih = int(rng.integers(3, 7))
        iw = int(rng.integers(3, 7))
        kh = int(rng.integers(1, min(3, ih) + 1))
        kw = int(rng.integers(1, min(3, iw) + 1))
        stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        padding = (int(rng.integers(0, 2)), int(rng.integers(0, 2)))
        filt = rng.normal(size=(oc, ic, kh, kw))
        kb = KernelBlock(filt, stride, padding, (ic, ih, iw))
        mat = kb.matrix()
        # every row of the unrolled matrix is one convolution window
        x = rng.normal(size=(ic, ih, iw))
        xp = np.pad(x, ((0, 0), (padding[0], padding[0]), (padding[1], padding[1])))
        oc2, oh, ow = kb.out_geometry
        y = mat @ x.reshape(-1)
        for c in range(oc2):
            for oy in range(oh):
                for ox in range(ow):
                    win = xp[:, oy * stride[0]:oy * stride[0] + kh,
                             ox * stride[1]:ox * stride[1] + kw]
                    want = float((win * filt[c]).sum())
                    got = y[(c * oh + oy) * ow + ox]
                    assert abs(got - want) < 1e-9


def test_ewise_bitwise_vs_dense():
    rng = np.random.default_rng(13)
    cases = 0
    for i in range(60):
        a = random_tensor(rng)
        b = random_tensor(rng, shape=a.shape)
        for op in EWISE_OPS:
            got = ops.ewise(op, a, b, Diagnostics())
            got.validate()
            ref = apply_binop(op, a.to_dense(), b.to_dense())
            assert got.shape == ref.shape
            assert np.array_equal(got.to_dense(), ref, equal_nan=True), (op, a, b)
            cases += 1
    assert cases >= 200


def test_ewise_preserves_structure():
    rng = np.random.default_rng(14)
    for _ in range(50):
        n = int(rng.integers(2, 6))
        b_ = int(rng.integers(1, 4))
        d1 = SparseTensor((b_, n, n), 0.0,
                          [((0, 0, 0), DiagonalBlock(rng.normal(size=(b_, n)), 1))])
        d2 = SparseTensor((b_, n, n), 0.0,
                          [((0, 0, 0), DiagonalBlock(rng.normal(size=(b_, n)), 1))])
        dense = SparseTensor.dense(rng.normal(size=(b_, n, n)))
        s = ops.ewise("add", d1, d2, Diagnostics())
        assert [type(blk) for _, blk in s.blocks] == [DiagonalBlock]
        m = ops.ewise("mul", dense, d1, Diagnostics())
        assert [type(blk) for _, blk in m.blocks] == [DiagonalBlock]
        assert np.array_equal(m.to_dense(), dense.to_dense() * d1.to_dense())


def test_unary_and_clamp():
    rng = np.random.default_rng(15)
    cases = 0
    for _ in range(70):
        t = random_tensor(rng)
        for op in ("neg", "not", "abs"):
            got = ops.unary(op, t, Diagnostics())
            got.validate()
            if op == "neg":
                ref = -t.to_dense()
            elif op == "abs":
                ref = np.abs(t.to_dense())
            else:
                ref = (t.to_dense() == 0).astype(np.float64)
            assert np.array_equal(got.to_dense(), ref)
            cases += 1
        lo, hi = sorted(rng.normal(size=2))
        got = ops.clamp(t, lo, hi, Diagnostics())
        assert np.array_equal(got.to_dense(), np.clip(t.to_dense(), lo, hi))
        got = ops.clamp(t, 0.0, None, Diagnostics())
        assert np.array_equal(got.to_dense(), np.maximum(t.to_dense(), 0.0))
        cases += 2
    assert cases >= 200


def test_select_vs_where():
    rng = np.random.default_rng(16)
    for i in range(200):
        a = random_tensor(rng)
        b = random_tensor(rng, shape=a.shape)
        if i % 4 == 0:
            cond = SparseTensor.full(a.shape, float(rng.integers(0, 2)))
        else:
            craw = random_tensor(rng, shape=a.shape, bg_choices=(0.0, 1.0))
            cond = SparseTensor.from_dense((craw.to_dense() > 0).astype(np.float64))
        got = ops.select(cond, a, b, Diagnostics())
        got.validate()
        ref = np.where(cond.to_dense() != 0.0, a.to_dense(), b.to_dense())
        assert np.array_equal(got.to_dense(), ref)


def test_select_never_leaks_losing_lane():
    # a NaN in the not-taken lane must not poison the output
    nan_lane = SparseTensor.dense(np.full((2, 2), np.nan))
    ok_lane = SparseTensor.dense(np.ones((2, 2)))
    cond = SparseTensor.full((2, 2), 1.0)
    out = ops.select(cond, ok_lane, nan_lane, Diagnostics())
    assert np.array_equal(out.to_dense(), np.ones((2, 2)))
    mixed = SparseTensor.dense(np.array([[1.0, 0.0], [0.0, 1.0]]))
    out = ops.select(mixed, ok_lane, nan_lane, Diagnostics())
    assert np.isnan(out.to_dense()[0, 1]) and out.to_dense()[0, 0] == 1.0


def test_matmul_random():
    rng = np.random.default_rng(17)
    for i in range(250):
        nlead = int(rng.integers(0, 3))
        lead_a = tuple(int(rng.choice([1, 2, 3])) for _ in range(nlead))
        lead_b = tuple(la if rng.random() < 0.6 else 1 for la in lead_a)
        if rng.random() < 0.3:
            lead_a, lead_b = lead_b, lead_a
        m, j, k = (int(rng.integers(1, 6)) for _ in range(3))
        a = random_tensor(rng, shape=lead_a + (m, j), bg_choices=(0.0,))
        b = random_tensor(rng, shape=lead_b + (j, k), bg_choices=(0.0,))
        got = ops.matmul(a, b, Diagnostics())
        got.validate()
        ref = np.einsum("...mj,...jk->...mk",
                        np.broadcast_to(a.to_dense(), lead_a and tuple(
                            max(x, y) for x, y in zip(lead_a, lead_b)) + (m, j) or (m, j)),
                        np.broadcast_to(b.to_dense(), lead_a and tuple(
                            max(x, y) for x, y in zip(lead_a, lead_b)) + (j, k) or (j, k)))
        assert got.shape == ref.shape
        assert rel_err(got.to_dense(), ref) < 1e-12, i


def test_matmul_structured_pairs():
    rng = np.random.default_rng(18)
    for _ in range(60):
        b_, n, k = int(rng.integers(1, 4)), int(rng.integers(2, 6)), int(rng.integers(1, 5))
        diag = SparseTensor((b_, n, n), 0.0,
                            [((0, 0, 0), DiagonalBlock(rng.normal(size=(b_, n)), 1))])
        diag2 = SparseTensor((b_, n, n), 0.0,
                             [((0, 0, 0), DiagonalBlock(rng.normal(size=(b_, n)), 1))])
        dense = SparseTensor.dense(rng.normal(size=(b_, n, k)))
        out = ops.matmul(diag, dense, Diagnostics())
        ref = np.einsum("bmj,bjk->bmk", diag.to_dense(), dense.to_dense())
        assert rel_err(out.to_dense(), ref) < 1e-12
        out2 = ops.matmul(diag, diag2, Diagnostics())
        assert all(isinstance(blk, DiagonalBlock) for _, blk in out2.blocks)
        ref2 = np.einsum("bmj,bjk->bmk", diag.to_dense(), diag2.to_dense())
        assert rel_err(out2.to_dense(), ref2) < 1e-12
        cst = SparseTensor((b_, k, n), 0.0, [((0, 0, 0), ConstBlock(1.25, (b_, k, n)))])
        out3 = ops.matmul(cst, diag, Diagnostics())
        ref3 = np.einsum("bmj,bjk->bmk", cst.to_dense(), diag.to_dense())
        assert rel_err(out3.to_dense(), ref3) < 1e-12


def test_matmul_kernel_paths():
    rng = np.random.default_rng(19)
    for _ in range(40):
        ic = int(rng.integers(1, 3))
        oc = int(rng.integers(1, 3))
        ih = int(rng.integers(3, 6))
        iw = int(rng.integers(3, 6))
        kh = int(rng.integers(1, 4))
        kw = int(rng.integers(1, 4))
        stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        padding = (int(rng.integers(0, 2)), int(rng.integers(0, 2)))
        filt = rng.normal(size=(oc, ic, kh, kw))
        kb = KernelBlock(filt, stride, padding, (ic, ih, iw), (1,))
        rows, cols = kb.matrix_shape
        K = SparseTensor((1, rows, cols), 0.0, [((0, 0, 0), kb)])
        dg = Diagnostics()

        x = SparseTensor.dense(rng.normal(size=(1, int(rng.integers(1, 5)), rows)))
        out = ops.matmul(x, K, dg)
        ref = np.einsum("bmj,bjk->bmk", x.to_dense(), K.to_dense())
        assert rel_err(out.to_dense(), ref) < 1e-12

        d = SparseTensor((1, rows, rows), 0.0,
                         [((0, 0, 0), DiagonalBlock(rng.normal(size=(1, rows)), 1))])
        out = ops.matmul(d, K, dg)
        ref = np.einsum("bmj,bjk->bmk", d.to_dense(), K.to_dense())
        assert rel_err(out.to_dense(), ref) < 1e-12
        assert any(isinstance(blk, PatchesBlock) for _, blk in out.blocks)

        d2 = SparseTensor((1, cols, cols), 0.0,
                          [((0, 0, 0), DiagonalBlock(rng.normal(size=(1, cols)), 1))])
        out = ops.matmul(K, d2, dg)
        ref = np.einsum("bmj,bjk->bmk", K.to_dense(), d2.to_dense())
        assert rel_err(out.to_dense(), ref) < 1e-12

        y = SparseTensor.dense(rng.normal(size=(1, cols, int(rng.integers(1, 4)))))
        out = ops.matmul(K, y, dg)
        ref = np.einsum("bmj,bjk->bmk", K.to_dense(), y.to_dense())
        assert rel_err(out.to_dense(), ref) < 1e-12


def test_matmul_nonzero_background_densifies_but_matches():
    rng = np.random.default_rng(20)
    a = random_tensor(rng, shape=(2, 3, 4), bg_choices=(1.0,))
    b = random_tensor(rng, shape=(2, 4, 5), bg_choices=(0.5,))
    dg = Diagnostics()
    out = ops.matmul(a, b, dg)
    ref = np.einsum("bmj,bjk->bmk", a.to_dense(), b.to_dense())
    assert rel_err(out.to_dense(), ref) < 1e-12
    assert dg.densify_fallbacks >= 1


def test_reduce_random():
    rng = np.random.default_rng(21)
    cases = 0
    for _ in range(120):
        t = random_tensor(rng)
        axis = int(rng.integers(0, t.rank))
        got = ops.reduce(t, axis, "sum", Diagnostics())
        got.validate()
        ref = t.to_dense().sum(axis=axis)
        assert got.shape == ref.shape
        assert rel_err(got.to_dense(), ref) < 1e-12
        op = ("max", "min")[int(rng.integers(0, 2))]
        got2 = ops.reduce(t, axis, op, Diagnostics())
        ref2 = t.to_dense().max(axis=axis) if op == "max" else t.to_dense().min(axis=axis)
        assert np.array_equal(got2.to_dense(), ref2)
        cases += 2
    assert cases >= 200


def test_repeat_and_dims():
    rng = np.random.default_rng(22)
    for _ in range(200):
        t = random_tensor(rng)
        axis = int(rng.integers(0, t.rank))
        k = int(rng.integers(1, 4))
        got = ops.repeat(t, axis, k, Diagnostics())
        got.validate()
        reps = [1] * t.rank
        reps[axis] = k
        assert np.array_equal(got.to_dense(), np.tile(t.to_dense(), reps))

        p = int(rng.integers(0, t.rank + 1))
        ad = ops.add_dim(t, p, Diagnostics())
        ad.validate()
        assert np.array_equal(ad.to_dense(), np.expand_dims(t.to_dense(), p))
        rd = ops.remove_dim(ad, p, Diagnostics())
        assert np.array_equal(rd.to_dense(), t.to_dense())


def test_concat_and_pad():
    rng = np.random.default_rng(23)
    for _ in range(60):
        rank = int(rng.integers(2, 4))
        base = tuple(int(rng.integers(1, 5)) for _ in range(rank))
        axis = int(rng.integers(0, rank))
        parts = []
        for _ in range(int(rng.integers(1, 4))):
            shp = list(base)
            shp[axis] = int(rng.integers(1, 5))
            parts.append(random_tensor(rng, shape=tuple(shp), bg_choices=(0.0,)))
        got = ops.concat(parts, axis, Diagnostics())
        got.validate()
        ref = np.concatenate([p.to_dense() for p in parts], axis=axis)
        assert np.array_equal(got.to_dense(), ref)

        t = parts[0]
        grown = ops.pad_axis(t, axis, t.shape[axis] + int(rng.integers(0, 3)))
        grown.validate()
        ref2 = np.zeros(grown.shape)
        sl = tuple(slice(0, n) for n in t.shape)
        ref2[sl] = t.to_dense()
        assert np.array_equal(grown.to_dense(), ref2)


def test_dense_mode_parity():
    rng = np.random.default_rng(24)
    for _ in range(50):
        a = random_tensor(rng, bg_choices=(0.0,))
        b = random_tensor(rng, shape=a.shape, bg_choices=(0.0,))
        op = EWISE_OPS[int(rng.integers(0, len(EWISE_OPS)))]
        sparse_out = ops.ewise(op, a, b, Diagnostics())
        with dense_mode():
            dense_out = ops.ewise(op, a, b, Diagnostics())
            assert all(isinstance(blk, DenseBlock) for _, blk in dense_out.blocks)
        assert np.array_equal(sparse_out.to_dense(), dense_out.to_dense(), equal_nan=True)


def test_div_by_zero_is_counted_and_ieee():
    dg = Diagnostics()
    a = SparseTensor.dense(np.array([[1.0, -1.0, 0.0]]))
    b = SparseTensor.dense(np.array([[0.0, 2.0, 0.0]]))
    out = ops.ewise("div", a, b, dg)
    vals = out.to_dense()
    assert np.isposinf(vals[0, 0]) and vals[0, 1] == -0.5 and np.isnan(vals[0, 2])
    assert dg.div_by_zero >= 2
