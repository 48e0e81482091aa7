import numpy as np
import pytest
from scipy.linalg import expm

from symindex.errors import IrregularCrossing, NotBlockTriangular, NotLinearlyStable
from symindex.maslov import (
    ClmOptions,
    LagrangianPath,
    clm_graph_index,
    clm_index,
    iota1_index,
    is_linearly_stable,
    stable_component_probe,
    zhu_block_index,
)
from symindex.symplectic_core import LagrangianSubspace, SpComponent, SymplecticPath, sp_component, standard_j


def shear(t0):
    return SymplecticPath.from_function(lambda t: np.array([[1.0, 0.0], [t * t0, 1.0]]), samples=33)


def full_turn(turns=1.0, n=1):
    return SymplecticPath.from_function(lambda t: expm(2 * np.pi * turns * t * standard_j(n)), samples=65)


def random_path(rng, n):
    """Products of rotations and shears, i.e. generic symplectic paths through I."""
    j = standard_j(n)
    gens = []
    for _ in range(3):
        a = rng.normal(size=(2 * n, 2 * n)) * rng.uniform(0.5, 3.0)
        gens.append(j @ (a + a.T) / 2)
    return SymplecticPath.from_function(
        lambda t: expm(t * gens[0]) @ expm(np.sin(2 * t) * gens[1]) @ expm(t * t * gens[2]), samples=129)


class TestClm:
    @pytest.mark.parametrize("t0, expected", [(1.0, 1), (0.0, 0), (-1.0, 0)])
    def test_special_index(self, t0, expected):
        assert clm_graph_index(shear(t0)) == expected
        assert clm_graph_index(shear(t0), method="winding") == expected

    def test_constant_transverse(self):
        ell = LagrangianPath(lambda t: np.array([[1.0], [0.0]]), 0.0, 1.0)
        assert clm_index(ell, LagrangianSubspace(np.array([[0.0], [1.0]]))) == 0

    def test_half_turn_of_line(self):
        w = LagrangianSubspace(np.array([[1.0], [0.0]]))
        ell = LagrangianPath(lambda t: expm(np.pi * t * standard_j(1)) @ np.array([[1.0], [0.0]]), 0.0, 1.0)
        assert clm_index(ell, w) == 1

    def test_constant_nondegenerate_psi(self):
        m = np.diag([2.0, 0.5])
        path = SymplecticPath.from_function(lambda t: m)
        assert clm_graph_index(path) == 0

    def test_full_loop(self):
        assert clm_graph_index(full_turn()) == 2

    def test_endpoint_formula(self):
        opts = ClmOptions(endpoint_formula=True)
        assert clm_graph_index(full_turn(), opts) == 2
        # the shear's crossing form at t=0 is degenerate, which the unrotated formula cannot resolve
        with pytest.raises(IrregularCrossing):
            clm_graph_index(shear(1.0), opts)

    def test_complement_independence(self, rng):
        # two transversal complements give the same crossing-form signature
        from symindex.maslov import crossing_form
        w = LagrangianSubspace(np.array([[1.0], [0.0]]))
        ell = LagrangianPath(lambda t: expm(np.pi * t * standard_j(1)) @ np.array([[0.0], [1.0]]), 0.0, 1.0)
        g1, _ = crossing_form(ell, w, 0.5)
        g2, _ = crossing_form(ell, w, 0.5, complement=np.array([[1.0], [0.3]]))
        assert np.sign(g1[0, 0]) == np.sign(g2[0, 0]) != 0


class TestIota1:
    def test_constant_plus(self):
        assert iota1_index(SymplecticPath.from_function(lambda t: -np.eye(2))) == 0

    def test_full_loop(self):
        assert iota1_index(full_turn()) == 2

    def test_hyperbolic_odd(self):
        path = SymplecticPath.from_function(lambda t: np.diag([np.exp(t), np.exp(-t)]))
        assert iota1_index(path) % 2 == 1

    def test_agrees_with_clm(self, rng):
        for _ in range(12):
            path = random_path(rng, int(rng.integers(1, 3)))
            assert iota1_index(path) == clm_graph_index(path)

    def test_parity_matches_endpoint_components(self, rng):
        from symindex.symplectic_core import rotation
        for _ in range(10):
            path = random_path(rng, 1)
            eps = 1e-3
            value = iota1_index(path, eps=eps)
            a = sp_component(rotation(1, -eps) @ path(0.0))
            b = sp_component(rotation(1, -eps) @ path(1.0))
            assert (value % 2 == 0) == (a is b)


class TestZhu:
    @pytest.mark.parametrize("t0, expected", [(1.0, 1), (0.0, 0), (-1.0, 0)])
    def test_special_index(self, t0, expected):
        assert zhu_block_index(shear(t0)) == expected

    def test_identity_blocks(self):
        assert zhu_block_index(SymplecticPath.from_function(lambda t: np.eye(4))) == 0

    def test_rejects_upper_block(self):
        with pytest.raises(NotBlockTriangular):
            zhu_block_index(SymplecticPath.from_function(lambda t: np.array([[1.0, t], [0.0, 1.0]])))

    def test_random_block_triangular_matches_clm(self, rng):
        # [[E, 0], [t S E, E]] with E orthogonal and S symmetric is symplectic
        for _ in range(8):
            n = int(rng.integers(1, 3))
            a = rng.normal(size=(n, n))
            skew = (a - a.T) / 2
            s = rng.normal(size=(n, n))
            s = (s + s.T) / 2

            def mat(t, skew=skew, s=s, n=n):
                e = expm(t * skew)
                return np.block([[e, np.zeros((n, n))], [t * s @ e, e]])

            path = SymplecticPath.from_function(mat)
            assert zhu_block_index(path) == clm_graph_index(path)


class TestProbe:
    def test_identity(self):
        assert stable_component_probe(np.eye(2), 0.1) == (SpComponent.PLUS, SpComponent.PLUS)

    def test_quarter_rotation(self):
        assert stable_component_probe(expm(np.pi / 2 * standard_j(1))) == (SpComponent.PLUS, SpComponent.PLUS)

    def test_shear_rejected(self):
        with pytest.raises(NotLinearlyStable):
            stable_component_probe(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_linear_stability(self):
        assert is_linearly_stable(expm(0.3 * standard_j(2)))
        assert not is_linearly_stable(np.diag([2.0, 0.5]))
