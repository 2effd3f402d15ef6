"""Reference interpreter tests: hand-checked cases, soundness, relationships."""

from __future__ import annotations

import numpy as np
import pytest

from certc import corpus
from certc.frontend import check_program, parse_program
from certc.oracle import (
    DensePoly,
    DenseSym,
    OracleError,
    compose_affine_interval,
    run_oracle,
    sample_envelope,
)
from certc.run import InputSpec, Layer, Network, random_fcn


def checked(name: str):
    return check_program(parse_program(corpus.load_source(name)))


def oracle_run(name: str, net: Network, spec: InputSpec):
    return run_oracle(checked(name), net, spec)


def identity_relu_net() -> Network:
    """One input, one affine passthrough neuron, one relu neuron."""
    return Network([
        Layer("input", 1),
        Layer("affine", 1, weight=np.array([[1.0]]), bias=np.zeros(1)),
        Layer("relu", 1),
    ])


UNSTABLE = InputSpec(points=np.array([[0.0]]), epsilon=1.0)  # x in [-1, 1]


class TestHandChecked:
    def test_ibp_affine(self):
        net = Network([
            Layer("input", 2),
            Layer("affine", 2, weight=np.array([[1.0, 1.0], [1.0, -1.0]]),
                  bias=np.array([0.0, 0.5])),
        ])
        spec = InputSpec(points=np.array([[0.5, 0.5]]), epsilon=0.5)
        run = oracle_run("ibp", net, spec)
        l, u = run.bounds(1)
        assert np.allclose(l, [[0.0, -0.5]])
        assert np.allclose(u, [[2.0, 1.5]])

    def test_ibp_relu_stable_and_unstable(self):
        net = Network([
            Layer("input", 3),
            Layer("affine", 3, weight=np.eye(3), bias=np.array([2.0, -2.0, 0.0])),
            Layer("relu", 3),
        ])
        spec = InputSpec(points=np.zeros((1, 3)), epsilon=1.0)
        run = oracle_run("ibp", net, spec)
        l, u = run.bounds(2)
        assert np.allclose(l, [[1.0, 0.0, 0.0]])
        assert np.allclose(u, [[3.0, 0.0, 1.0]])

    def test_deeppoly_unstable_relu_relaxation(self):
        run = oracle_run("deeppoly", identity_relu_net(), UNSTABLE)
        l, u = run.bounds(2)
        assert np.allclose(l, [[0.0]])
        assert np.allclose(u, [[1.0]])
        # lower poly keeps the neuron (l + u = 0 passes the >= 0 test)
        lo = run.value(2, "L", 0, 0)
        assert lo == DensePoly(0.0, {1: 1.0})
        # upper poly is the chord 0.5 x + 0.5 over the affine neuron (id 1)
        hi = run.value(2, "U", 0, 0)
        assert hi == DensePoly(0.5, {1: 0.5})

    def test_deeppoly_negative_stable_relu(self):
        spec = InputSpec(points=np.array([[-2.0]]), epsilon=1.0)  # x in [-3, -1]
        run = oracle_run("deeppoly", identity_relu_net(), spec)
        l, u = run.bounds(2)
        assert np.allclose(l, [[0.0]])
        assert np.allclose(u, [[0.0]])
        assert run.value(2, "U", 0, 0) == DensePoly(0.0, {})

    def test_deepz_unstable_relu_zonotope(self):
        run = oracle_run("deepz", identity_relu_net(), UNSTABLE)
        z = run.value(2, "Z", 0, 0)
        # u z / (u - l) + u l (eta - 1) / (2 (u - l)) with l=-1, u=1
        assert z == DenseSym(0.25, {0: 0.5, 1: -0.25})
        assert z.interval() == (-0.5, 1.0)
        assert run.sym_count == 2

    def test_deepz_input_zonotope_from_clipped_box(self):
        spec = InputSpec(points=np.array([[0.05, 0.5]]), epsilon=0.1, clip01=True)
        run = run_oracle(checked("deepz"), Network([Layer("input", 2)]), spec)
        z0 = run.value(0, "Z", 0, 0)  # box clipped to [0, 0.15]
        assert z0.const == pytest.approx(0.075)
        assert z0.coeffs == {0: pytest.approx(0.075)}
        z1 = run.value(0, "Z", 0, 1)  # box [0.4, 0.6] untouched by the clip
        assert z1.const == pytest.approx(0.5)
        assert z1.coeffs == {1: pytest.approx(0.1)}

    def test_polyexp_identity_init(self):
        run = oracle_run("deeppoly", identity_relu_net(), UNSTABLE)
        assert run.value(0, "L", 0, 0) == DensePoly(0.0, {0: 1.0})
        assert run.value(0, "U", 0, 0) == DensePoly(0.0, {0: 1.0})


class TestAffineExactness:
    # crownibp composes only into its last layer; the rest are exact throughout
    @pytest.mark.parametrize("name,every_layer", [
        ("deeppoly", True), ("skippoly", True), ("deepz", True),
        ("crownibp", False),
    ])
    def test_exact_on_affine_networks(self, name, every_layer):
        rng = np.random.default_rng(21)
        net = random_fcn(rng, [3, 6, 5, 2], relu=False)
        spec = InputSpec(points=rng.uniform(0, 1, (2, 3)), epsilon=0.05, clip01=True)
        run = oracle_run(name, net, spec)
        comp = compose_affine_interval(net, *spec.bounds())
        last = len(net.layers) - 1
        for k in range(1, len(net.layers)) if every_layer else [last]:
            l, u = run.bounds(k)
            cl, cu = comp[k]
            assert np.abs(l - cl).max() < 1e-9
            assert np.abs(u - cu).max() < 1e-9

    def test_composition_rejects_relu(self):
        net = identity_relu_net()
        with pytest.raises(Exception):
            compose_affine_interval(net, np.zeros((1, 1)), np.ones((1, 1)))


def _runs_on(seed: int, sizes, batch: int = 2, eps: float = 0.04):
    rng = np.random.default_rng(seed)
    net = random_fcn(rng, sizes)
    spec = InputSpec(points=rng.uniform(0, 1, (batch, sizes[0])),
                     epsilon=eps, clip01=True)
    return net, spec


FULL_BOUNDS = ["ibp", "crownibp", "deeppoly", "polyzono", "zid", "skippoly"]
FINAL_ONLY = ["deepz", "reusecert"]


class TestSoundness:
    @pytest.mark.parametrize("name", FULL_BOUNDS)
    def test_every_layer_contains_samples(self, name):
        net, spec = _runs_on(31, [4, 7, 6, 3])
        run = oracle_run(name, net, spec)
        env = sample_envelope(net, spec, np.random.default_rng(1), 300)
        for k in range(len(net.layers)):
            l, u = run.bounds(k)
            mn, mx = env[k]
            assert (l <= mn + 1e-9).all(), (name, k)
            assert (u >= mx - 1e-9).all(), (name, k)

    @pytest.mark.parametrize("name", FINAL_ONLY)
    def test_final_layer_contains_samples(self, name):
        # these certifiers keep placeholder zeros for inner concrete bounds
        net, spec = _runs_on(32, [4, 7, 6, 3])
        run = oracle_run(name, net, spec)
        env = sample_envelope(net, spec, np.random.default_rng(2), 300)
        l, u = run.final_bounds()
        mn, mx = env[-1]
        assert (l <= mn + 1e-9).all()
        assert (u >= mx - 1e-9).all()
        li, ui = run.bounds(2)
        assert (li == 0).all() and (ui == 0).all()


class TestRelationships:
    def test_skippoly_equals_deeppoly_on_fcn(self):
        for seed in (41, 42, 43):
            net, spec = _runs_on(seed, [3, 8, 8, 8, 2])
            a = oracle_run("deeppoly", net, spec)
            b = oracle_run("skippoly", net, spec)
            for k in range(len(net.layers)):
                la, ua = a.bounds(k)
                lb, ub = b.bounds(k)
                assert np.abs(la - lb).max() < 1e-9
                assert np.abs(ua - ub).max() < 1e-9

    def test_deeppoly_within_ibp(self):
        net, spec = _runs_on(44, [4, 9, 9, 3])
        a = oracle_run("deeppoly", net, spec)
        b = oracle_run("ibp", net, spec)
        for k in range(len(net.layers)):
            la, ua = a.bounds(k)
            lb, ub = b.bounds(k)
            assert (la >= lb - 1e-9).all()
            assert (ua <= ub + 1e-9).all()

    def test_polyzono_at_least_as_tight_as_parts(self):
        net, spec = _runs_on(45, [4, 8, 8, 2])
        pz = oracle_run("polyzono", net, spec).final_bounds()
        dz = oracle_run("deepz", net, spec).final_bounds()
        dp = oracle_run("deeppoly", net, spec).final_bounds()
        assert (pz[0] >= np.maximum(dz[0], dp[0]) - 1e-9).all()
        assert (pz[1] <= np.minimum(dz[1], dp[1]) + 1e-9).all()

    def test_reusecert_substitution_stops_at_first_layer(self):
        # on an affine chain the stop rule keeps layer-1 neurons in place
        rng = np.random.default_rng(46)
        net = random_fcn(rng, [3, 4, 4, 4, 2], relu=False)
        spec = InputSpec(points=rng.uniform(0, 1, (1, 3)), epsilon=0.03,
                         clip01=True)
        run = oracle_run("reusecert", net, spec)
        poly = run.value(3, "L", 0, 0)
        layers = {run.network.locate(nid)[0] for nid in poly.coeffs}
        assert layers == {1}

    def test_reusecert_inner_polys_substituted_to_inputs_on_fcn(self):
        net, spec = _runs_on(46, [3, 5, 5, 5, 2])
        run = oracle_run("reusecert", net, spec)
        poly = run.value(3, "L", 0, 0)
        layers = {run.network.locate(nid)[0] for nid in poly.coeffs}
        assert layers <= {0}

    def test_deeppoly_stores_one_step_polys(self):
        # the stored polys cover only the previous layer; substitution all the
        # way down happens inside the concrete bound components
        net, spec = _runs_on(47, [3, 5, 5, 2])
        run = oracle_run("deeppoly", net, spec)
        poly = run.value(3, "L", 0, 0)
        layers = {run.network.locate(nid)[0] for nid in poly.coeffs}
        assert layers == {2}


class TestMechanics:
    def test_batch_rows_independent(self):
        net, spec = _runs_on(51, [3, 6, 6, 2], batch=3)
        full = oracle_run("deeppoly", net, spec)
        for b in range(3):
            single = InputSpec(points=spec.points[b:b + 1], epsilon=spec.epsilon,
                               clip01=spec.clip01)
            one = oracle_run("deeppoly", net, single)
            for k in range(len(net.layers)):
                lf, uf = full.bounds(k)
                lo, uo = one.bounds(k)
                assert np.allclose(lf[b], lo[0])
                assert np.allclose(uf[b], uo[0])

    def test_sym_ids_shared_across_batch(self):
        net, spec = _runs_on(52, [3, 5, 5, 2], batch=2)
        run = oracle_run("deepz", net, spec)
        # 3 input symbols plus one block per relu layer
        assert run.sym_count == 3 + 5 + 5
        za = run.value(2, "Z", 0, 0)
        zb = run.value(2, "Z", 1, 0)
        assert set(za.nonzero()) <= set(range(run.sym_count))
        assert set(zb.nonzero()) <= set(range(run.sym_count))

    def test_zid_mints_only_in_zonotope_region(self):
        net, spec = _runs_on(53, [3, 4, 4, 4, 2])
        run = oracle_run("zid", net, spec)
        # relu layers at depth 2 and 4 mint; the one at depth 6 does not
        assert run.sym_count == 3 + 4 + 4

    def test_nonterminating_substitution_raises(self):
        src = corpus.load_source("deeppoly").replace(
            "func replace_lower(Neuron n, Float coeff) = "
            "(coeff >= 0.0) ? (coeff * n[L]) : (coeff * n[U]);",
            "func replace_lower(Neuron n, Float coeff) = coeff * n;")
        net, spec = _runs_on(54, [2, 3, 2])
        with pytest.raises(OracleError, match="settle"):
            run_oracle(check_program(parse_program(src)), net, spec)

    def test_input_width_mismatch_raises(self):
        net, _ = _runs_on(55, [3, 4, 2])
        spec = InputSpec(points=np.zeros((1, 2)), epsilon=0.1)
        with pytest.raises(OracleError, match="expects"):
            oracle_run("ibp", net, spec)

    def test_determinism(self):
        net, spec = _runs_on(56, [3, 6, 6, 2])
        a = oracle_run("polyzono", net, spec)
        b = oracle_run("polyzono", net, spec)
        for k in range(len(net.layers)):
            assert np.array_equal(a.bounds(k)[0], b.bounds(k)[0])
            assert np.array_equal(a.bounds(k)[1], b.bounds(k)[1])
        za = a.value(3, "Z", 0, 0)
        zb = b.value(3, "Z", 0, 0)
        assert za == zb
