import numpy as np
import pytest

from symindex.errors import MissingTprime, NotNonNull
from symindex.index_form import (
    analytic_s0_bound,
    assemble_fixed,
    assemble_pair,
    build_basis,
    check_relation_geo_spec,
    difference_decomposition,
    difference_table,
    eigen_trajectories,
    fixed_kernel,
    last_crossing,
    spectral_indices,
)
from symindex.orbit_model import fundamental_solution
from symindex.presets import build_preset, preset_expectations


def _rot(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def _morse(m, rel=1e-9):
    eig = np.linalg.eigvalsh(m)
    return int(np.sum(eig < -rel * max(1.0, np.max(np.abs(eig)))))


@pytest.fixture(scope="module")
def setups():
    out = {}
    for name in preset_expectations():
        orbit = build_preset(name)
        basis = build_basis(orbit, 16)
        out[name] = (orbit, basis, assemble_pair(orbit, basis))
    return out


class TestBasis:
    def test_periodic_modes_span_trig(self):
        basis = build_basis(np.eye(1), 5)
        t = np.linspace(0.0, 1.0, 41)
        vals, ders = basis.evaluate(t)
        assert vals.shape == (41, 5, 1) and ders.shape == (41, 5, 1)
        reference = np.stack([np.ones_like(t)] + [f(2 * np.pi * k * t) for k in (1, 2) for f in (np.cos, np.sin)],
                             axis=1)
        coef, res, *_ = np.linalg.lstsq(reference, vals[:, :, 0], rcond=None)
        assert np.allclose(reference @ coef, vals[:, :, 0], atol=1e-12)
        assert abs(np.linalg.det(coef)) > 1e-8

    def test_antiperiodic_modes(self):
        basis = build_basis(-np.eye(1), 4)
        v, _ = basis.evaluate(np.array([0.0, 1.0]))
        assert np.allclose(v[1], -v[0], atol=1e-12)
        t = np.linspace(0.0, 1.0, 33)
        vals, _ = basis.evaluate(t)
        half = np.stack([f(np.pi * k * t) for k in (1, 3) for f in (np.cos, np.sin)], axis=1)
        coef = np.linalg.lstsq(half, vals[:, :, 0], rcond=None)[0]
        assert np.allclose(half @ coef, vals[:, :, 0], atol=1e-12)

    @pytest.mark.parametrize("A", [_rot(np.pi / 2), _rot(0.3), np.diag([1.0, -1.0]),
                                   np.array([[0.0, 1.0], [1.0, 0.0]])])
    def test_boundary_condition(self, A):
        basis = build_basis(A, 5)
        assert basis.size == 10
        assert basis.boundary_residual() < 1e-12
        assert np.isfinite(basis.gram_condition())

    def test_derivatives_match_finite_differences(self):
        basis = build_basis(_rot(0.7), 4)
        t, h = np.array([0.31]), 1e-6
        _, d = basis.evaluate(t)
        vp, _ = basis.evaluate(t + h)
        vm, _ = basis.evaluate(t - h)
        assert np.allclose((vp - vm) / (2 * h), d, atol=1e-6)


class TestAssembly:
    def test_flat_fixed_form_at_zero(self, setups):
        orbit, basis, (_, fixed) = setups["flat_torus"]
        m = fixed.at(0.0)
        assert np.allclose(m, m.T)
        assert _morse(m) == 0
        assert fixed_kernel(fixed, basis).shape[1] == orbit.n

    def test_fixed_form_entries_against_quadrature(self):
        # flat case: I(u, v) = (1/T) int <u', v'>
        orbit = build_preset("flat_torus")
        basis = build_basis(orbit, 4)
        form = assemble_fixed(orbit, basis, 0.0).matrix.entries
        t = (np.arange(4000) + 0.5) / 4000
        _, d = basis.evaluate(t)
        oracle = np.einsum("mia,mja->ij", d, d) / t.size / orbit.T
        assert np.allclose(form, oracle, atol=1e-6)

    def test_harmonic_fixed_kernel(self, setups):
        _, basis, (_, fixed) = setups["harmonic_loop"]
        assert fixed_kernel(fixed, basis).shape[1] > 0

    @pytest.mark.parametrize("name", ["flat_torus", "circle_free_particle", "harmonic_loop", "kepler_circular"])
    def test_definite_at_s0(self, setups, name):
        orbit, basis, pairs = setups[name]
        res = spectral_indices(orbit, basis, pairs=pairs)
        assert np.min(np.linalg.eigvalsh(pairs[1].at(res.s0))) > 0
        crossing = last_crossing(pairs[1])
        assert crossing is None or crossing < res.s0
        bound = analytic_s0_bound(orbit)
        if np.isfinite(bound):
            for pair in pairs:
                tail = last_crossing(pair)
                assert tail is None or tail < bound
        assert res.gap > 0

    @pytest.mark.parametrize("name", list(preset_expectations()))
    def test_flow_equals_morse_difference(self, setups, name):
        orbit, basis, pairs = setups[name]
        res = spectral_indices(orbit, basis, pairs=pairs)
        for pair, flow in zip(pairs, res):
            assert flow == _morse(pair.at(0.0)) - _morse(pair.at(res.s0))

    def test_eigen_trajectories_shape(self, setups):
        _, _, (free, _) = setups["kepler_circular"]
        grid, rows = eigen_trajectories(free, 8.0, samples=16, count=5)
        assert grid.shape == (16,) and rows.shape == (16, 5)
        assert grid[0] == 0.0 and np.isclose(grid[-1], 8.0)


class TestIndices:
    @pytest.mark.parametrize("name", list(preset_expectations()))
    def test_expected(self, setups, name):
        orbit, basis, pairs = setups[name]
        res = spectral_indices(orbit, basis, pairs=pairs)
        want = preset_expectations()[name]
        assert (res.ispec_free, res.ispec_fixed) == (want["ispec_free"], want["ispec_fixed"])

    def test_stable_under_refinement(self):
        orbit = build_preset("harmonic_loop")
        found = {tuple(spectral_indices(orbit, build_basis(orbit, n))) for n in (8, 16, 24)}
        assert found == {(3, 2)}

    @pytest.mark.parametrize("name", ["flat_torus", "circle_free_particle", "harmonic_loop", "kepler_circular"])
    def test_relation_geo_spec(self, setups, name):
        orbit, basis, pairs = setups[name]
        res = spectral_indices(orbit, basis, pairs=pairs)
        ok, igeo, rhs = check_relation_geo_spec(orbit, basis, fundamental_solution(orbit), res.ispec_fixed)
        assert ok and igeo == rhs == preset_expectations()[name]["igeo"]


class TestDifference:
    @pytest.mark.parametrize("ksign, tprime, expected", [(1, 0.5, (1, 1, 0)), (1, 0.0, (1, 1, 0)),
                                                         (1, -0.5, (0, 0, 0)), (-1, 0.5, (2, 1, 1)),
                                                         (-1, -0.5, (1, 0, 1))])
    def test_table(self, ksign, tprime, expected):
        assert difference_table(ksign, tprime) == expected

    @pytest.mark.parametrize("name", ["flat_torus", "harmonic_loop", "kepler_circular"])
    def test_positive_branch_matches(self, setups, name):
        orbit, basis, pairs = setups[name]
        rep = difference_decomposition(orbit, basis, spectral_indices(orbit, basis, pairs=pairs))
        assert rep.leg_0 + rep.fixed_flow + rep.leg_s0 == rep.ispec_free
        assert rep.matches_table
        assert rep.difference == rep.table_total

    def test_legs_add_up_for_negative_kappa(self, setups):
        orbit, basis, pairs = setups["negative_P_synthetic"]
        rep = difference_decomposition(orbit, basis, spectral_indices(orbit, basis, pairs=pairs))
        assert rep.kappa_sign == -1
        assert rep.leg_0 + rep.fixed_flow + rep.leg_s0 == rep.ispec_free

    def test_missing_tprime(self, setups):
        orbit, basis, _ = setups["flat_torus"]
        with pytest.raises(MissingTprime):
            difference_decomposition(orbit.with_tprime(None), basis)

    def test_not_non_null(self, sign_changing_orbit):
        with pytest.raises(NotNonNull):
            assemble_pair(sign_changing_orbit, build_basis(sign_changing_orbit, 4))
