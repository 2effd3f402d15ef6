"""Shape analysis tests: corpus lowering, metadata shapes, loop structure."""

from functools import lru_cache

import pytest

from certc.analysis import AnalysisError, Analyzer, analyze_program
from certc.corpus import PROGRAMS, load_source
from certc.frontend import check_program, parse_program
from certc.frontend.types import BOOL, POLYEXP, REAL, SYMEXP
from certc.ir import (
    BATCH_SIZE,
    CURR_SIZE,
    ONE,
    POLY_SIZE,
    PREV_SIZE,
    SYM_SIZE,
    IrAccess,
    IrBinary,
    IrCombineToPoly,
    IrCombineToSym,
    IrDot,
    IrITE,
    IrMapCoeff,
    IrMapNeuron,
    IrMapNoise,
    IrMult,
    IrReduce,
    IrReturn,
    IrSym,
    IrTernary,
    IrVar,
    IrWhile,
    ShapeVar,
    resolve,
    walk_all_exprs,
    walk_expr,
    walk_stmts,
)


@lru_cache(maxsize=None)
def build(name):
    return analyze_program(check_program(parse_program(load_source(name))), name)


def stmts_of(prog, kind, klass):
    return [s for s in walk_stmts(prog.bodies[kind]) if isinstance(s, klass)]


def exprs_of(prog, kind, klass):
    return [e for e in walk_all_exprs(prog.bodies[kind]) if isinstance(e, klass)]


class TestCorpusLowering:
    @pytest.mark.parametrize("name", PROGRAMS)
    def test_compiles_and_validates(self, name):
        prog = build(name)
        assert set(prog.bodies) == {"affine", "relu"}
        assert prog.fields[0] == "l" and prog.fields[1] == "u"

    @pytest.mark.parametrize("name", PROGRAMS)
    def test_deterministic(self, name):
        checked = check_program(parse_program(load_source(name)))
        a = analyze_program(checked, name)
        b = analyze_program(checked, name)
        assert a.bodies == b.bodies

    def test_backsubstituting_programs_have_loops(self):
        for name in ("deeppoly", "skippoly"):
            assert len(stmts_of(build(name), "affine", IrWhile)) == 2
        assert len(stmts_of(build("ibp"), "affine", IrWhile)) == 0

    def test_branchy_programs_use_statement_branches(self):
        assert len(stmts_of(build("crownibp"), "affine", IrITE)) == 1
        # nested three-way choice
        ites = stmts_of(build("zid"), "affine", IrITE)
        assert len(ites) == 2
        outer = ites[0]
        assert any(isinstance(s, IrITE) for s in walk_stmts(outer.other))

    def test_conditional_loops_only_in_taken_branch(self):
        ite = stmts_of(build("crownibp"), "affine", IrITE)[0]
        in_then = [s for s in walk_stmts(ite.then) if isinstance(s, IrWhile)]
        in_else = [s for s in walk_stmts(ite.other) if isinstance(s, IrWhile)]
        assert len(in_then) == 2 and len(in_else) == 0

    def test_zonotope_programs_use_sym_nodes(self):
        prog = build("deepz")
        # deepz_lower never reads its noise handle, so only the coefficient
        # view of the symbolic value survives into the tree
        assert exprs_of(prog, "affine", IrMapCoeff)
        assert exprs_of(prog, "affine", IrCombineToSym)
        mints = exprs_of(prog, "relu", IrSym)
        assert mints and len({m.serial for m in mints}) == 1
        assert exprs_of(prog, "relu", IrCombineToSym)


class TestArmShapes:
    def test_every_return_component_is_whole_layer(self):
        binding = {BATCH_SIZE: 2, CURR_SIZE: 5, PREV_SIZE: 7, POLY_SIZE: 13, SYM_SIZE: 11}
        for name in PROGRAMS:
            prog = build(name)
            for kind, body in prog.bodies.items():
                for ret in walk_stmts(body):
                    if not isinstance(ret, IrReturn):
                        continue
                    assert len(ret.values) == len(prog.fields)
                    for v, fty in zip(ret.values, prog.field_types):
                        assert v.md.ty == fty
                        eff = v.md.eval_effective(binding)
                        assert eff == (2, 5), (name, kind, eff)

    def test_ibp_lower_is_reduce_plus_const(self):
        prog = build("ibp")
        ret = stmts_of(prog, "affine", IrReturn)[0]
        low = ret.values[0]
        assert isinstance(low, IrBinary) and low.op == "+"
        assert isinstance(low.lhs, IrReduce) and low.lhs.op == "sum"
        assert low.lhs.axis == 2

    def test_affine_arm_contracts_previous_layer(self):
        dot = exprs_of(build("ibp"), "affine", IrDot)[0]
        assert isinstance(dot.lhs, IrVar) and dot.lhs.name == "prev"
        assert dot.lhs.md.ty.is_list
        assert dot.lhs.md.flat_sigma() == (BATCH_SIZE, PREV_SIZE)
        assert dot.md.flat_sigma() == (BATCH_SIZE, CURR_SIZE)

    def test_map_views_share_the_pushed_axis(self):
        prog = build("ibp")
        n = exprs_of(prog, "affine", IrMapNeuron)[0]
        c = exprs_of(prog, "affine", IrMapCoeff)[0]
        assert n.md.flat_sigma() == (ONE, ONE, POLY_SIZE)
        assert n.md.flat_beta() == (BATCH_SIZE, CURR_SIZE, ONE)
        assert c.md.flat_sigma() == (BATCH_SIZE, CURR_SIZE, POLY_SIZE)
        assert n.md.height == 2 and c.md.height == 2

    def test_field_gather_is_batch_led(self):
        prog = build("ibp")
        gathers = [e for e in walk_all_exprs(prog.bodies["affine"])
                   if isinstance(e, IrAccess) and e.field == "l"]
        md = gathers[0].md
        assert md.ty == REAL
        assert md.flat_sigma() == (BATCH_SIZE, ONE, POLY_SIZE)
        assert md.flat_beta() == (ONE, CURR_SIZE, ONE)

    def test_relu_arm_promotes_neuron_branch(self):
        prog = build("deeppoly")
        ret = stmts_of(prog, "relu", IrReturn)[0]
        big_l = ret.values[2]
        assert big_l.md.ty == POLYEXP
        assert isinstance(big_l, IrCombineToPoly)

    def test_division_stays_inside_selected_branch(self):
        prog = build("deeppoly")
        divs = [e for e in exprs_of(prog, "relu", IrBinary) if e.op == "/"]
        assert divs
        terns = exprs_of(prog, "relu", IrTernary)
        under = [d for t in terns for d in walk_expr(t) if isinstance(d, IrBinary) and d.op == "/"]
        assert set(map(id, divs)) <= set(map(id, under))


class TestTraverseLowering:
    def test_state_width_is_loop_local(self):
        prog = build("deeppoly")
        loop = stmts_of(prog, "affine", IrWhile)[0]
        inits = [s for s in walk_stmts(loop.init) if hasattr(s, "name")]
        st = inits[0]
        assert st.name.endswith("_state")
        reads = [e for e in walk_all_exprs(loop.body)
                 if isinstance(e, IrVar) and e.name == st.name]
        assert reads and all(isinstance(r.md.width, ShapeVar) for r in reads)

    def test_two_loops_use_distinct_state_names(self):
        prog = build("deeppoly")
        loops = stmts_of(prog, "affine", IrWhile)
        names = set()
        for lp in loops:
            for s in walk_stmts(lp.init):
                if hasattr(s, "name") and s.name.endswith("_state"):
                    names.add(s.name)
        assert len(names) == 2

    def test_frontier_excludes_input_layer(self):
        prog = build("deeppoly")
        loop = stmts_of(prog, "affine", IrWhile)[0]
        layer_cmps = [
            e for s in walk_stmts(loop.body) for root in
            ([s.value] if hasattr(s, "value") else [])
            for e in walk_expr(root)
            if isinstance(e, IrBinary) and e.op == ">"
            and any(isinstance(a, IrAccess) and a.field == "layer" for a in walk_expr(e))
        ]
        assert layer_cmps

    def test_replacement_sum_folds_back_into_state(self):
        prog = build("deeppoly")
        loop = stmts_of(prog, "affine", IrWhile)[0]
        combines = [e for s in walk_stmts(loop.body)
                    if hasattr(s, "value")
                    for e in walk_expr(s.value) if isinstance(e, IrCombineToPoly)]
        assert combines
        top = combines[0]
        binding = {BATCH_SIZE: 3, CURR_SIZE: 4, PREV_SIZE: 6, POLY_SIZE: 9, SYM_SIZE: 5}
        assert top.const.md.eval_effective(binding) == (3, 4)
        assert top.coeff.md.eval_effective(binding) == (3, 4, 9)

    def test_loop_condition_is_scalar_bool(self):
        for name in ("deeppoly", "reusecert"):
            for loop in stmts_of(build(name), "affine", IrWhile):
                assert loop.cond.md.ty == BOOL
                assert loop.cond.md.flat_sigma() == (ONE,)


class TestPhysicalConsistency:
    """Under a concrete binding, operand layouts must match node claims."""

    BINDING = {BATCH_SIZE: 2, CURR_SIZE: 5, PREV_SIZE: 7, POLY_SIZE: 13, SYM_SIZE: 11}

    def shape(self, md):
        b = dict(self.BINDING)
        for s in md.flat_sigma():
            if isinstance(s, ShapeVar):
                b[s] = self.BINDING[POLY_SIZE]
        return tuple(resolve(s, b) for s in md.flat_sigma())

    @pytest.mark.parametrize("name", PROGRAMS)
    def test_elementwise_operands_agree(self, name):
        prog = build(name)
        for body in prog.bodies.values():
            for e in walk_all_exprs(body):
                if isinstance(e, (IrBinary, IrMult)):
                    assert self.shape(e.lhs.md) == self.shape(e.rhs.md) == self.shape(e.md)
                elif isinstance(e, IrTernary):
                    assert (self.shape(e.cond.md) == self.shape(e.then.md)
                            == self.shape(e.other.md) == self.shape(e.md))
                elif isinstance(e, IrReduce):
                    got = list(self.shape(e.arg.md))
                    del got[e.axis]
                    assert tuple(got) == self.shape(e.md)


class TestErrors:
    def test_promotion_across_domains_is_rejected(self):
        checked = check_program(parse_program(load_source("ibp")))
        an = Analyzer(checked)
        poly = an.promote(an.const(1.0), "PolyExp")
        with pytest.raises(AnalysisError):
            an.promote(poly, "SymExp")

    def test_program_without_flow_is_rejected(self):
        import dataclasses
        checked = check_program(parse_program(load_source("ibp")))
        stripped = dataclasses.replace(checked, program=dataclasses.replace(
            checked.program, flows=()))
        with pytest.raises(AnalysisError):
            analyze_program(stripped)
