import math

import numpy as np
import pytest

from trackmpc import geometry, synthesis
from trackmpc.config import load_config
from trackmpc.errors import NotFinitelyDetermined
from trackmpc.geometry import Polytope
from trackmpc.linalg import is_positive_definite
from trackmpc.model import ExoBlock, ExosystemModel, PlantModel, split

from conftest import fixture_path
from oracles import upsilon_bisection

T0_REGRESSION = 182  # first certified MOAS run on the corrected helicopter data


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def scalar_plant():
    return PlantModel([[0.5]], [[1.0]], [[1.0]], [[0.0]], Polytope.box([1.0, 1.0]))


def heli_parts(cfg):
    reg = synthesis.solve_regulator(cfg.plant, cfg.exo)
    w = synthesis.cost_weights(cfg.plant, cfg.exo, cfg.Q, cfg.T0, cfg.Lambda)
    return reg, w


class TestRegulator:
    def test_scalar(self):
        exo = ExosystemModel((ExoBlock("periodic", [[1.0]]),), [[1.0]])
        reg = synthesis.solve_regulator(scalar_plant(), exo)
        assert reg.Pi[0, 0] == pytest.approx(1.0, abs=1e-14)
        assert reg.Gamma[0, 0] == pytest.approx(0.5, abs=1e-14)
        assert reg.L[0, 0] == pytest.approx(0.5, abs=1e-14)

    def test_zero_output_map(self):
        exo = ExosystemModel((ExoBlock("periodic", [[1.0]]),), [[0.0]])
        reg = synthesis.solve_regulator(scalar_plant(), exo)
        assert np.all(reg.Pi == 0) and np.all(reg.Gamma == 0)

    def test_no_reference(self):
        reg = synthesis.solve_regulator(scalar_plant(), ExosystemModel((), np.zeros((1, 0))))
        assert reg.Pi.shape == (1, 0)

    def test_helicopter_residuals(self, heli_config):
        reg, _ = heli_parts(heli_config)
        syl, out = reg.residuals(heli_config.plant, heli_config.exo)
        assert syl <= 1e-8 * (1 + np.linalg.norm(reg.Pi))
        assert out <= 1e-8
        K = heli_config.plant.K
        assert np.array_equal(reg.L, reg.Gamma - K @ reg.Pi)


class TestWeights:
    def test_identity(self):
        assert np.allclose(synthesis.weight_T_periodic(np.eye(1), 1, np.eye(1)), np.eye(1))

    def test_quarter_turn(self):
        T = synthesis.weight_T_periodic(rotation(math.pi / 2), 4, np.eye(2))
        assert np.allclose(T, 4 * np.eye(2), atol=1e-14)

    def test_nonidentity_T0_invariant(self, rng):
        G = rng.normal(size=(2, 2))
        T = synthesis.weight_T_periodic(rotation(2 * math.pi / 7), 7, G @ G.T + np.eye(2))
        S = rotation(2 * math.pi / 7)
        assert np.linalg.norm(S.T @ T @ S - T) <= 1e-12 * np.linalg.norm(T)

    def test_rotation_block_isotropic(self):
        T = synthesis.weight_T_nonperiodic([ExoBlock("nonperiodic", rotation(1.0))], [1.0])
        assert abs(T[0, 1]) <= 1e-14 and T[0, 0] == pytest.approx(T[1, 1], rel=1e-14)

    def test_two_blocks(self):
        blocks = [ExoBlock("nonperiodic", rotation(1.0)), ExoBlock("nonperiodic", rotation(0.3))]
        T = synthesis.weight_T_nonperiodic(blocks, [1.0, 5.0])
        assert T.shape == (4, 4) and np.all(T[:2, 2:] == 0)
        assert is_positive_definite(T[:2, :2]) and is_positive_definite(T[2:, 2:])

    def test_unequal_lambda_rejected(self):
        with pytest.raises(ValueError):
            synthesis.weight_T_nonperiodic([ExoBlock("nonperiodic", rotation(1.0))], [[1.0, 2.0]])

    def test_sheared_block_invariant(self):
        # a similarity transform of a rotation: eigenvectors are not orthogonal
        V = np.array([[1.0, 0.4], [0.0, 2.0]])
        M = V @ rotation(0.7) @ np.linalg.inv(V)
        T = synthesis.weight_T_nonperiodic([ExoBlock("nonperiodic", M)], [3.0])
        assert np.linalg.norm(M.T @ T @ M - T) <= 1e-12 * np.linalg.norm(T)
        assert is_positive_definite(T)

    def test_helicopter(self, heli_config):
        _, w = heli_parts(heli_config)
        p, exo = heli_config.plant, heli_config.exo
        Acl, S = p.Acl, exo.S
        assert np.linalg.norm(Acl.T @ w.P @ Acl - w.P + w.Q) <= 1e-8 * np.linalg.norm(w.Q)
        assert np.linalg.norm(S.T @ w.T @ S - w.T) <= 1e-8 * np.linalg.norm(w.T)
        for M in (w.Q, w.P, w.T):
            np.linalg.cholesky(M)


class TestMoas:
    def test_nilpotent(self):
        O, it, growth = synthesis.moas(np.zeros((2, 2)), Polytope.box([1.0, 1.0]), cap=10)
        assert it == 1 and growth == (0,)
        assert geometry.same_set(O, Polytope.box([1.0, 1.0]))

    def test_scalar_contraction(self):
        O, it, _ = synthesis.moas(np.array([[0.5]]), Polytope.box([1.0]), cap=10)
        assert it == 1
        assert geometry.same_set(O, Polytope.box([1.0]))

    def test_rotation_with_output(self):
        # a quarter turn under |x_1| <= 1 closes once both coordinates are bounded
        O, it, _ = synthesis.moas(rotation(math.pi / 2), Polytope([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0]),
                                  cap=10)
        assert geometry.same_set(O, Polytope.box([1.0, 1.0]))
        assert it == 2

    def test_irrational_rotation_hits_cap(self):
        with pytest.raises(NotFinitelyDetermined) as exc:
            synthesis.moas(rotation(1.0), Polytope([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0]), cap=15)
        assert exc.value.iterations == 15
        assert exc.value.rows > 2

    def test_origin_outside_rejected(self):
        with pytest.raises(ValueError):
            synthesis.moas(np.eye(1), Polytope.box([1.0], [0.5]), cap=3)

    def test_invariance_of_result(self, rng):
        M = np.array([[0.9, 0.4], [-0.3, 0.8]])
        O, _, _ = synthesis.moas(M, Polytope([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0]), cap=100)
        for p in geometry.sample_boundary_points(O, 50, seed=4):
            assert geometry.contains(O, M @ p, 1e-9)

    def test_default_cap(self):
        assert synthesis.default_cap(96) == 480
        assert synthesis.default_cap(1) == 200


class TestUpsilon:
    def test_box_line(self):
        ups = synthesis.upsilon(Polytope.box([1.0, 1.0]), np.array([[1.0]]), np.array([[0.0]]), np.eye(1))
        assert ups == pytest.approx(1.0, abs=1e-9)

    def test_zero_direction(self):
        ups = synthesis.upsilon(Polytope.box([1.0, 1.0]), np.zeros((1, 2)), np.zeros((1, 2)), np.eye(2))
        assert ups == math.inf

    def test_helicopter_against_bisection(self, heli_config):
        cfg = heli_config
        reg, w = heli_parts(cfg)
        sp = split(cfg.exo)
        Pin, Gan = reg.Pi[:, sp.n_index], reg.Gamma[:, sp.n_index]
        Tn = w.T[np.ix_(sp.n_index, sp.n_index)]
        ups = synthesis.upsilon(cfg.plant.Z, Pin, Gan, Tn)
        ref = upsilon_bisection(cfg.plant.Z, np.vstack([Pin, Gan]), Tn)
        assert 0 < ups < math.inf
        assert abs(ups - ref) <= 1e-6

    def test_random_against_bisection(self, rng):
        worst = 0.0
        for _ in range(20):
            nx = int(rng.integers(1, 3))
            nu = int(rng.integers(1, 3))
            k = int(rng.integers(1, 3))
            Z = Polytope(rng.normal(size=(3 * (nx + nu), nx + nu)), rng.uniform(0.5, 2.0, 3 * (nx + nu)))
            Z = Z.intersect(Polytope.box(4 * np.ones(nx + nu)))
            D = rng.normal(size=(nx + nu, k))
            G = rng.normal(size=(k, k))
            Tn = G @ G.T + np.eye(k)
            ups = synthesis.upsilon(Z, D[:nx], D[nx:], Tn)
            worst = max(worst, abs(ups - upsilon_bisection(Z, D, Tn)))
        assert worst <= 1e-6


class TestTerminalSet:
    def test_no_reference(self):
        cfg = load_config(fixture_path("toy_scalar"))
        d = synthesis.synthesize(cfg.plant, cfg.exo, horizon=cfg.horizon)
        assert d.terminal.variant == "periodic"
        assert d.terminal.iterations == 1
        expected = cfg.plant.Z.map(np.vstack([np.eye(1), cfg.plant.K]))
        assert geometry.same_set(d.terminal.polytope, expected)

    def test_nonperiodic_only(self):
        cfg = load_config(fixture_path("toy_nonperiodic"))
        d = synthesis.synthesize(cfg.plant, cfg.exo, cfg.Q, cfg.T0, cfg.Lambda, cfg.horizon)
        ts = d.terminal
        assert ts.variant == "mixed" and cfg.exo.k0 == 1
        assert ts.polytope.dim == cfg.plant.n
        assert ts.upsilon == pytest.approx(5.0, abs=1e-8)

    def test_helicopter_mixed(self, heli_design):
        ts = heli_design.terminal
        assert ts.variant == "mixed"
        assert ts.polytope.dim == 12
        assert ts.iterations == T0_REGRESSION
        assert ts.iterations <= synthesis.default_cap(96)
        assert 0 < ts.upsilon < math.inf

    def test_helicopter_meta(self, heli_design):
        meta = heli_design.meta
        assert meta["regulator_residual"] <= 1e-8
        assert meta["lyapunov_residual"] <= 1e-8
        assert meta["T_invariance_residual"] <= 1e-8
        assert heli_design.decision_counts == (26, 2, 8)


class TestReferenceSets:
    def test_origin_member(self, heli_design):
        assert synthesis.rf_contains(heli_design, np.zeros(8))
        assert synthesis.rfm_contains(np.zeros(8), heli_design)

    def test_program_references_members(self, heli_config, heli_design):
        prog = heli_config.program
        for r in (prog.initial, prog.switches[0][1]):
            assert synthesis.rf_contains(heli_design, r)
            assert synthesis.rfm_contains(r, heli_design)

    def test_far_reference_rejected(self, heli_config, heli_design):
        r = 1e3 * heli_config.program.switches[0][1]
        assert not synthesis.rf_contains(heli_design, r)
        assert not synthesis.rfm_contains(r, heli_design)

    def test_boundary_beta_forces_zero_alpha(self, heli_design):
        ts = heli_design.terminal
        sp = split(heli_design.exo)
        beta = np.array([1.0, 0.0])
        beta *= ts.upsilon / math.sqrt(beta @ ts.Tn @ beta)
        r = np.zeros(8)
        r[sp.n_index] = beta
        assert synthesis.rf_contains(heli_design, r)
        r[sp.p_index[0]] = 1e-3
        assert not synthesis.rf_contains(heli_design, r, tol=1e-9)

    def test_slice_is_evaluator(self, heli_design):
        R = synthesis.rf_slice(heli_design)
        assert isinstance(R, synthesis.MixedReferenceSet)
        assert R.dim == 8 and np.zeros(8) in R

    def test_periodic_slice_is_polytope(self):
        cfg = load_config(fixture_path("toy_scalar"))
        d = synthesis.synthesize(cfg.plant, cfg.exo, horizon=cfg.horizon)
        assert isinstance(synthesis.rf_slice(d), Polytope)
