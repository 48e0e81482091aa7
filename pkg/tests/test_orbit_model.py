import json

import numpy as np
import pytest
from scipy.linalg import expm

from symindex import _kernels
from symindex.errors import FamilyUnavailable, InvalidOrbit, SingularP
from symindex.orbit_io import load_orbit, orbit_from_dict, orbit_to_dict, save_orbit
from symindex.orbit_model import (
    NullClass,
    OrbitData,
    estimate_tprime,
    euler_lagrange_residual,
    fundamental_solution,
    geometrical_index,
    hamiltonian_coefficient,
    kappa_classify,
)
from symindex.presets import build_preset, preset_names
from symindex.symplectic_core import standard_j

PRESETS = [(name, {}) for name in preset_names()] + [("flat_torus", {"frame": "screw"}),
                                                     ("negative_P_synthetic", {"base": "kepler"})]


def harmonic_n1(samples=65, period=2 * np.pi):
    grid = np.linspace(0.0, 1.0, samples)
    ones = np.ones((samples, 1, 1))
    xprime = np.stack([-np.sin(2 * np.pi * grid)], axis=1) * period
    lq = -np.stack([np.cos(2 * np.pi * grid)], axis=1)
    return OrbitData(n=1, T=period, h=0.5, grid=grid, P=ones, Q=0 * ones, R=-ones, Lq=lq,
                     xprime=xprime, A=np.eye(1), tprime_h=0.0)


@pytest.fixture(scope="module")
def solutions():
    return {(n, tuple(o.items())): fundamental_solution(build_preset(n, **o)) for n, o in PRESETS}


class TestFundamentalSolution:
    def test_free_particle_closed_form(self):
        orbit = build_preset("circle_free_particle")
        psi = fundamental_solution(orbit, 200)
        for t in (0.0, 0.3, 1.0):
            expected = np.array([[1.0, 0.0], [t * orbit.T, 1.0]])
            assert np.allclose(psi(t), expected, atol=1e-12)

    def test_harmonic_rotation(self):
        orbit = harmonic_n1()
        psi = fundamental_solution(orbit, 400)
        assert np.allclose(hamiltonian_coefficient(orbit, 0.2).entries, orbit.T * np.eye(2))
        for t in (0.25, 0.5, 1.0):
            assert np.allclose(psi(t), expm(t * orbit.T * standard_j(1)), atol=1e-9)

    def test_zero_coefficient_constant(self):
        grid = np.linspace(0.0, 1.0, 9)
        big = 1e12 * np.ones((9, 1, 1))
        orbit = OrbitData(n=1, T=1e-12, h=0.0, grid=grid, P=big, Q=0 * big, R=0 * big,
                          Lq=np.zeros((9, 1)), xprime=np.ones((9, 1)), A=np.eye(1))
        psi = fundamental_solution(orbit, 64)
        assert np.allclose(psi.mats, np.eye(2), atol=1e-20)

    @pytest.mark.parametrize("name, options", PRESETS)
    def test_symplectic_and_kernel(self, solutions, name, options):
        orbit = build_preset(name, **options)
        psi = solutions[(name, tuple(options.items()))]
        assert psi.meta["residual"] <= 1e-8
        assert psi.max_residual() <= 1e-8
        mono = orbit.A_d @ psi.mats[-1]
        # the velocity direction always carries multiplier 1
        sv = np.linalg.svd(mono - np.eye(mono.shape[0]), compute_uv=False)
        assert sv[-1] <= 1e-6 * max(1.0, sv[0])

    def test_midpoint_converges_to_gauss(self):
        orbit = build_preset("kepler_circular")
        g = fundamental_solution(orbit, 400)
        m = fundamental_solution(orbit, 4000, method="midpoint")
        assert m.meta["residual"] < 1e-10
        assert np.max(np.abs(g.mats[-1] - m.mats[-1])) < 1e-3
        assert m.meta["error_estimate"] > g.meta["error_estimate"]

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            fundamental_solution(build_preset("flat_torus"), 100, method="euler")

    def test_numpy_fallback_matches_compiled(self):
        orbit = build_preset("kepler_circular")
        compiled = fundamental_solution(orbit, 300).mats
        previous = _kernels.numba_active()
        _kernels.use_numba(False)
        try:
            plain = fundamental_solution(orbit, 300).mats
        finally:
            _kernels.use_numba(previous)
        assert np.allclose(compiled, plain, atol=1e-12)


class TestGeometricIndex:
    @pytest.mark.parametrize("name, expected", [("circle_free_particle", 1), ("flat_torus", 2),
                                                ("harmonic_loop", 4), ("kepler_circular", 2)])
    def test_values(self, solutions, name, expected):
        orbit = build_preset(name)
        igeo, mono = geometrical_index(orbit, solutions[(name, ())])
        assert igeo == expected
        assert mono.residual < 1e-8

    def test_harmonic_full_loop_n1(self):
        orbit = harmonic_n1()
        assert geometrical_index(orbit, fundamental_solution(orbit, 512))[0] == 2

    def test_grid_refinement(self):
        orbit = build_preset("kepler_circular")
        values = {geometrical_index(orbit, fundamental_solution(orbit, k))[0] for k in (512, 1024, 2000)}
        assert values == {2}


class TestOrbitChecks:
    @pytest.mark.parametrize("name, options", PRESETS)
    def test_boundary_compatibility(self, name, options):
        assert build_preset(name, **options).boundary_residual() <= 1e-10

    @pytest.mark.parametrize("name, cls", [("flat_torus", NullClass.L_POSITIVE),
                                           ("kepler_circular", NullClass.L_POSITIVE),
                                           ("negative_P_synthetic", NullClass.L_NEGATIVE)])
    def test_kappa_classes(self, name, cls):
        assert kappa_classify(build_preset(name))[1] is cls

    def test_not_non_null(self):
        orbit = build_preset("flat_torus")
        doc = orbit_to_dict(orbit)
        grid = np.asarray(doc["grid"])
        doc["P"] = [[[1.0, 0.0], [0.0, -1.0]]] * grid.size
        doc["xprime"] = np.stack([np.cos(2 * np.pi * grid), np.sin(2 * np.pi * grid)], axis=1).tolist()
        assert kappa_classify(orbit_from_dict(doc))[1] is NullClass.NOT_NON_NULL

    @pytest.mark.parametrize("name", ["flat_torus", "harmonic_loop", "kepler_circular", "circle_free_particle"])
    def test_euler_lagrange(self, name):
        eq, energy = euler_lagrange_residual(build_preset(name))
        assert eq < 1e-8 and energy < 1e-10

    def test_rejects_non_orthogonal_frame(self):
        doc = orbit_to_dict(build_preset("flat_torus"))
        doc["A"] = [[2.0, 0.0], [0.0, 1.0]]
        with pytest.raises(InvalidOrbit):
            orbit_from_dict(doc)

    def test_rejects_singular_p(self):
        doc = orbit_to_dict(build_preset("circle_free_particle"))
        doc["P"][3] = [[0.0]]
        with pytest.raises(SingularP):
            orbit_from_dict(doc)


class TestTprime:
    def test_kepler(self):
        h = -0.5
        analytic = 6 * np.pi * (-2 * h) ** -2.5
        assert estimate_tprime(build_preset("kepler_circular", h=h), h) == pytest.approx(analytic, rel=1e-6)

    def test_flat_negative(self):
        orbit = build_preset("flat_torus")
        assert estimate_tprime(orbit, orbit.h) == pytest.approx(-(2 * orbit.h) ** -1.5, rel=1e-6)

    def test_isochronous(self):
        orbit = build_preset("harmonic_loop")
        assert estimate_tprime(orbit, orbit.h) == 0.0

    def test_unavailable(self):
        with pytest.raises(FamilyUnavailable):
            estimate_tprime(harmonic_n1(), 0.5)


class TestOrbitFiles:
    def test_round_trip_exact(self, tmp_path):
        orbit = build_preset("kepler_circular")
        path = tmp_path / "orbit.json"
        save_orbit(orbit, path)
        back = load_orbit(path)
        for key in ("P", "Q", "R", "Lq", "xprime", "A", "grid"):
            assert np.array_equal(getattr(back, key), getattr(orbit, key))
        assert back.T == orbit.T and back.tprime_h == orbit.tprime_h

    def test_version_checked(self, tmp_path):
        doc = orbit_to_dict(build_preset("flat_torus"))
        doc["version"] = 99
        with pytest.raises(InvalidOrbit):
            orbit_from_dict(doc)
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(InvalidOrbit):
            load_orbit(path)

    def test_missing_field(self):
        doc = orbit_to_dict(build_preset("flat_torus"))
        del doc["R"]
        with pytest.raises(InvalidOrbit, match="R"):
            orbit_from_dict(doc)

    def test_document_is_plain_json(self):
        text = json.dumps(orbit_to_dict(build_preset("circle_free_particle")))
        assert json.loads(text)["format"] == "symindex-orbit"
