import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from symindex.errors import AsymmetricMatrix, NotLagrangian, NotSymplectic, OddDimension
from symindex.symplectic_core import (
    LagrangianSubspace,
    SpComponent,
    SymmetricMatrix,
    SymplecticPath,
    graph_lagrangian,
    intersection_dim,
    morse_index,
    product_j,
    rotate,
    signature,
    sp_component,
    standard_j,
    symplectic_residual,
    validate_symplectic,
)


def random_symplectic(rng, n, scale=0.6):
    a = rng.normal(size=(2 * n, 2 * n)) * scale
    return expm(standard_j(n) @ (a + a.T) / 2)


class TestValidate:
    def test_identity_accepted(self):
        assert validate_symplectic(np.eye(4), 1e-10).residual == 0.0

    def test_shear_accepted(self):
        validate_symplectic([[1.0, 0.0], [1.0, 1.0]])

    def test_scaling_rejected_with_residual_one(self):
        with pytest.raises(NotSymplectic) as info:
            validate_symplectic(np.diag([2.0, 1.0]))
        assert info.value.residual == pytest.approx(1.0)

    def test_odd_dimension(self):
        with pytest.raises(OddDimension):
            validate_symplectic(np.eye(3))

    def test_random_determinant_one(self, rng):
        for n in (1, 2, 3):
            m = validate_symplectic(random_symplectic(rng, n))
            assert abs(np.linalg.det(m.entries) - 1) <= 10 * 1e-10 + 1e-9


class TestSignature:
    @pytest.mark.parametrize("mat, expected", [
        (np.diag([1.0, -1.0]), (1, 0, 1)),
        (np.zeros((3, 3)), (0, 3, 0)),
        (np.array([[0.0, 1.0], [1.0, 0.0]]), (1, 0, 1)),
    ])
    def test_examples(self, mat, expected):
        assert signature(mat) == expected

    def test_asymmetry_rejected(self):
        with pytest.raises(AsymmetricMatrix):
            SymmetricMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_small_asymmetry_symmetrised(self):
        s = SymmetricMatrix(np.array([[1.0, 1e-12], [0.0, 1.0]]))
        assert np.array_equal(s.entries, s.entries.T)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_permutation_invariance(self, dim, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(dim, dim))
        s = a + a.T
        p = np.eye(dim)[rng.permutation(dim)]
        assert signature(p.T @ s @ p) == signature(s)
        assert morse_index(s) == int(np.sum(np.linalg.eigvalsh(s) < 0))


class TestComponents:
    def test_identity_zero(self):
        assert sp_component(np.eye(2)) is SpComponent.ZERO

    def test_minus_identity_plus(self):
        assert sp_component(-np.eye(2)) is SpComponent.PLUS

    def test_hyperbolic_minus(self):
        assert sp_component(np.diag([2.0, 0.5])) is SpComponent.MINUS

    def test_small_rotation_preserves_tag(self, rng):
        for _ in range(20):
            m = random_symplectic(rng, 2)
            tag = sp_component(m)
            if tag is SpComponent.ZERO or abs(np.linalg.det(m - np.eye(4))) < 1e-3:
                continue
            assert sp_component(rotate(m, 1e-7)) is tag


class TestLagrangians:
    def test_graph_of_identity_is_diagonal(self):
        g = graph_lagrangian(np.eye(2))
        assert np.allclose(g.frame, np.vstack([np.eye(2), np.eye(2)]))

    def test_graph_of_j(self):
        g = graph_lagrangian(standard_j(1))
        expected = LagrangianSubspace(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 0.0]]), product_j(1))
        assert intersection_dim(g, expected) == 2

    def test_graph_isotropic(self, rng):
        for n in (1, 2, 3):
            g = graph_lagrangian(random_symplectic(rng, n))
            assert np.max(np.abs(g.frame.T @ product_j(n) @ g.frame)) < 1e-10

    def test_not_lagrangian(self):
        with pytest.raises(NotLagrangian):
            LagrangianSubspace(np.array([[1.0], [0.0], [0.0], [0.0]]))
        with pytest.raises(NotLagrangian):
            LagrangianSubspace(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))

    def test_intersection_matches_kernel(self, rng):
        # block-diagonal Jordan-type constructions with a prescribed eigenvalue-1 part
        for k in range(3):
            blocks = [np.array([[1.0, 0.0], [1.0, 1.0]])] * k + [np.diag([2.0, 0.5])] * (2 - k)
            m = np.zeros((4, 4))
            for i, b in enumerate(blocks):
                idx = [i, i + 2]
                m[np.ix_(idx, idx)] = b
            f = random_symplectic(rng, 2)
            conj = f @ m @ np.linalg.inv(f)
            kernel = 4 - np.linalg.matrix_rank(conj - np.eye(4), tol=1e-8)
            assert intersection_dim(graph_lagrangian(conj), graph_lagrangian(np.eye(4))) == kernel == k


class TestRotate:
    def test_zero_angle(self, rng):
        m = random_symplectic(rng, 2)
        assert np.array_equal(rotate(m, 0.0), m)

    def test_pi_is_minus_identity(self):
        assert np.allclose(rotate(np.eye(2), np.pi), -np.eye(2), atol=1e-15)

    def test_inverse(self, rng):
        m = random_symplectic(rng, 3)
        assert np.allclose(rotate(rotate(m, 0.7), -0.7), m, atol=1e-12)

    def test_rotated_subspace(self):
        l = LagrangianSubspace(np.array([[1.0], [0.0]]))
        r = rotate(l, np.pi / 2)
        assert np.allclose(r.frame, [[0.0], [1.0]])


class TestSymplecticPath:
    def test_interpolant_stays_symplectic(self):
        ts = np.linspace(0, 1, 9)
        path = SymplecticPath(ts, np.array([expm(2 * np.pi * t * standard_j(1)) for t in ts]))
        for t in np.linspace(0, 1, 37):
            assert symplectic_residual(path(t)) < 1e-12
            assert np.allclose(path(t), expm(2 * np.pi * t * standard_j(1)), atol=1e-12)

    def test_rejects_bad_times(self):
        with pytest.raises(ValueError):
            SymplecticPath([0.0, 0.0], np.array([np.eye(2)] * 2))
