"""Compiled pipeline tests: parity with the reference interpreter."""

from __future__ import annotations

import numpy as np
import pytest

from certc import corpus
from certc.analysis import analyze_program
from certc.frontend import check_program, parse_program
from certc.oracle import run_oracle
from certc.run import (
    DEFAULT_CHUNK_LIMIT,
    ExecError,
    InputSpec,
    Layer,
    Network,
    margins,
    random_cnn,
    random_fcn,
    run_checked,
    run_program,
    verified,
    verified_fraction,
)
from certc.sparse import Diagnostics, dense_mode

CERTIFIERS = ["ibp", "crownibp", "deepz", "deeppoly",
              "reusecert", "polyzono", "zid", "skippoly"]


@pytest.fixture(scope="module")
def programs():
    out = {}
    for name in CERTIFIERS:
        ck = check_program(parse_program(corpus.load_source(name)))
        out[name] = (ck, analyze_program(ck))
    return out


def all_layer_gap(compiled, oracle, net: Network, batch: int) -> float:
    worst = 0.0
    for k in range(1, len(net.layers)):
        lo, hi = compiled.bounds(k)
        ol, ou = oracle.bounds(k)
        for b in range(batch):
            for j in range(net.layers[k].size):
                worst = max(worst, abs(lo[b, j] - ol[b, j]),
                            abs(hi[b, j] - ou[b, j]))
    return worst


class TestOracleParity:
    @pytest.mark.parametrize("name", CERTIFIERS)
    def test_fcn_all_layers(self, programs, name):
        ck, prog = programs[name]
        rng = np.random.default_rng(421)
        for _ in range(4):
            sizes = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(3, 6)))]
            net = random_fcn(rng, sizes)
            x = rng.uniform(-1.0, 1.0, sizes[0])
            spec = InputSpec([x.tolist()], epsilon=float(rng.uniform(0.01, 0.5)))
            compiled = run_program(prog, net, spec)
            oracle = run_oracle(ck, net, spec)
            assert all_layer_gap(compiled, oracle, net, 1) < 1e-12
            assert compiled.sym_count == oracle.sym_count

    @pytest.mark.parametrize("name", CERTIFIERS)
    def test_cnn_batched(self, programs, name):
        ck, prog = programs[name]
        rng = np.random.default_rng(77)
        net = random_cnn(rng, (1, 4, 4), [(2, 3, 1, 1), (2, 2, 2, 0)], [5, 3])
        xs = rng.uniform(-1.0, 1.0, (2, net.input_size))
        spec = InputSpec(xs.tolist(), epsilon=0.05)
        compiled = run_program(prog, net, spec)
        oracle = run_oracle(ck, net, spec)
        assert all_layer_gap(compiled, oracle, net, 2) < 1e-12
        assert compiled.sym_count == oracle.sym_count

    def test_batch_rows_independent(self, programs):
        _, prog = programs["deeppoly"]
        rng = np.random.default_rng(5)
        net = random_fcn(rng, [3, 4, 4, 2])
        xs = rng.uniform(-1.0, 1.0, (3, 3))
        batched = run_program(prog, net, InputSpec(xs.tolist(), epsilon=0.1))
        for b in range(3):
            single = run_program(prog, net, InputSpec([xs[b].tolist()], epsilon=0.1))
            bl, bu = batched.final_bounds()
            sl, su = single.final_bounds()
            assert np.allclose(bl[b], sl[0], atol=1e-13)
            assert np.allclose(bu[b], su[0], atol=1e-13)

    def test_run_checked_shortcut(self, programs):
        ck, prog = programs["ibp"]
        net = random_fcn(np.random.default_rng(9), [2, 3, 2])
        spec = InputSpec([[0.1, -0.2]], epsilon=0.3)
        a = run_checked(ck, net, spec)
        b = run_program(prog, net, spec)
        assert np.allclose(a.final_bounds()[0], b.final_bounds()[0])
        assert np.allclose(a.final_bounds()[1], b.final_bounds()[1])


class TestHandChecked:
    def test_ibp_relu_box(self, programs):
        net = Network([
            Layer("input", 2),
            Layer("affine", 2, weight=np.array([[1.0, 1.0], [1.0, -1.0]]),
                  bias=np.array([0.0, 0.5])),
            Layer("relu", 2),
        ])
        spec = InputSpec(points=np.array([[0.5, 0.5]]), epsilon=0.5)
        run = run_program(programs["ibp"][1], net, spec)
        l1, u1 = run.bounds(1)
        assert np.allclose(l1, [[0.0, -0.5]])
        assert np.allclose(u1, [[2.0, 1.5]])
        l2, u2 = run.bounds(2)
        assert np.allclose(l2, [[0.0, 0.0]])
        assert np.allclose(u2, [[2.0, 1.5]])

    def test_deepz_unstable_relu(self, programs):
        # relu of x in [-1, 1]: slope 1/2, fresh noise term of magnitude 1/4,
        # center 1/4; the trailing identity layer concretizes the zonotope.
        net = Network([
            Layer("input", 1),
            Layer("affine", 1, weight=np.array([[1.0]]), bias=np.zeros(1)),
            Layer("relu", 1),
            Layer("affine", 1, weight=np.array([[1.0]]), bias=np.zeros(1)),
        ])
        run = run_program(programs["deepz"][1],
                          net, InputSpec(points=np.array([[0.0]]), epsilon=1.0))
        l1, u1 = run.bounds(1)
        assert np.allclose((l1, u1), ([[-1.0]], [[1.0]]))
        # Relu arms publish no box; the zonotope carries the information.
        assert np.allclose(run.bounds(2), ([[0.0]], [[0.0]]))
        l3, u3 = run.bounds(3)
        assert np.allclose(l3, [[-0.5]])
        assert np.allclose(u3, [[1.0]])
        assert run.sym_count == 2

    def test_deeppoly_diamond(self, programs):
        # Mirrored unstable pair, then r1 - r2.  Both relus tie the area
        # heuristic (l + u = 0), so the lower relation keeps slope 1 and the
        # upper is 0.5 y + 0.5.  Backsubstituting the upper of the output:
        # 0.5 y1 + 0.5 - y2 = 1.5 x + 0.5, maxed at x = 1 gives 2.
        net = Network([
            Layer("input", 1),
            Layer("affine", 2, weight=np.array([[1.0], [-1.0]]), bias=np.zeros(2)),
            Layer("relu", 2),
            Layer("affine", 1, weight=np.array([[1.0, -1.0]]), bias=np.zeros(1)),
        ])
        run = run_program(programs["deeppoly"][1],
                          net, InputSpec(points=np.array([[0.0]]), epsilon=1.0))
        assert np.allclose(run.bounds(2), ([[0.0, 0.0]], [[1.0, 1.0]]))
        l, u = run.final_bounds()
        assert np.allclose(u, [[2.0]])
        assert np.allclose(l, [[-2.0]])


class TestBackendModes:
    def test_dense_mode_matches_sparse(self, programs):
        rng = np.random.default_rng(31)
        net = random_fcn(rng, [3, 5, 4, 2])
        spec = InputSpec([rng.uniform(-1, 1, 3).tolist()], epsilon=0.2)
        for name in ["deeppoly", "deepz", "polyzono"]:
            sparse_run = run_program(programs[name][1], net, spec)
            with dense_mode(True):
                dense_run = run_program(programs[name][1], net, spec)
            for k in range(1, len(net.layers)):
                sl, su = sparse_run.bounds(k)
                dl, du = dense_run.bounds(k)
                assert np.allclose(sl, dl, atol=1e-12)
                assert np.allclose(su, du, atol=1e-12)

    def test_tiny_chunk_limit_matches_default(self, programs):
        rng = np.random.default_rng(13)
        net = random_fcn(rng, [4, 6, 5, 3])
        spec = InputSpec(rng.uniform(-1, 1, (2, 4)).tolist(), epsilon=0.1)
        for name in ["deeppoly", "deepz"]:
            base = run_program(programs[name][1], net, spec)
            diag = Diagnostics()
            small = run_program(programs[name][1], net, spec,
                                diag=diag, chunk_limit=64)
            for k in range(1, len(net.layers)):
                assert np.allclose(base.bounds(k)[0], small.bounds(k)[0], atol=1e-12)
                assert np.allclose(base.bounds(k)[1], small.bounds(k)[1], atol=1e-12)
            assert diag.densify_fallbacks > 0
        assert DEFAULT_CHUNK_LIMIT > 64

    def test_diagnostics_populated(self, programs):
        diag = Diagnostics()
        net = random_fcn(np.random.default_rng(2), [2, 3, 2])
        run_program(programs["deeppoly"][1], net,
                    InputSpec([[0.0, 0.0]], epsilon=0.5), diag=diag)
        assert diag.peak_blocks > 0


class TestErrors:
    def test_input_width_mismatch(self, programs):
        net = random_fcn(np.random.default_rng(1), [3, 2])
        with pytest.raises(ExecError, match="network expects"):
            run_program(programs["ibp"][1], net, InputSpec([[0.0, 0.0]], epsilon=0.1))

    def test_expression_field_not_scalar(self, programs):
        net = random_fcn(np.random.default_rng(1), [2, 2])
        run = run_program(programs["deepz"][1], net,
                          InputSpec([[0.0, 0.0]], epsilon=0.1))
        with pytest.raises(ExecError, match="not scalar"):
            run.real_field(1, "Z")


class TestRobustness:
    def test_margin_values(self):
        lower = np.array([[1.0, -1.0], [0.2, 0.4]])
        upper = np.array([[2.0, 0.5], [0.3, 0.9]])
        m = margins(lower, upper, [0, 1])
        assert np.allclose(m, [0.5, 0.1])
        assert verified(lower, upper, [0, 1]).tolist() == [True, True]
        assert verified(lower, upper, [1, 0]).tolist() == [False, False]
        assert verified_fraction(lower, upper, [0, 0]) == 0.5

    def test_single_output_infinite_margin(self):
        m = margins(np.array([[1.0]]), np.array([[2.0]]), [0])
        assert np.isinf(m[0])

    def test_label_validation(self):
        with pytest.raises(ValueError):
            margins(np.zeros((2, 3)), np.zeros((2, 3)), [0])
        with pytest.raises(ValueError):
            margins(np.zeros((1, 3)), np.zeros((1, 3)), [3])

    def test_verified_on_certified_run(self, programs):
        rng = np.random.default_rng(8)
        net = random_fcn(rng, [4, 8, 3])
        xs = rng.uniform(-1, 1, (5, 4))
        labels = [int(np.argmax(net.forward(x))) for x in xs]
        run = run_program(programs["deeppoly"][1], net,
                          InputSpec(xs.tolist(), epsilon=1e-4))
        lo, hi = run.final_bounds()
        # Tiny radius: certified argmax agrees with the concrete argmax.
        assert verified_fraction(lo, hi, labels) == 1.0
