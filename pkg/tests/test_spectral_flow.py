import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symindex.errors import SingularA
from symindex.spectral_flow import (
    BlockPerturbationFamily,
    SymmetricFormPath,
    block_morse_index,
    morse_difference,
    relative_morse_index,
    spectral_flow,
    spfl_family_grow,
    spfl_family_shrink,
)


def sym(rng, n):
    a = rng.normal(size=(n, n))
    return (a + a.T) / 2


class TestSpectralFlow:
    def test_single_crossing(self):
        path = SymmetricFormPath(lambda s: np.array([[2 * s - 1]]))
        flow, crossings = spectral_flow(path, return_crossings=True)
        assert flow == 1
        assert len(crossings) == 1 and crossings[0].t == pytest.approx(0.5, abs=1e-8)

    def test_constant_invertible(self):
        assert spectral_flow(SymmetricFormPath(lambda s: np.diag([1.0, -2.0]))) == 0

    def test_opposite_simultaneous_crossings(self):
        assert spectral_flow(SymmetricFormPath(lambda s: np.diag([s - 0.5, 0.5 - s]))) == 0

    def test_endpoint_conventions(self):
        # kernel at both ends: leaving 0 downwards counts -1, arriving at 0 from below counts +1
        assert spectral_flow(SymmetricFormPath(lambda s: np.array([[-s]]))) == -1
        assert spectral_flow(SymmetricFormPath(lambda s: np.array([[s - 1.0]]))) == 1
        assert spectral_flow(SymmetricFormPath(lambda s: np.array([[s]]))) == 0

    def test_concatenation(self, rng):
        a, b = sym(rng, 5), sym(rng, 5)
        fn = lambda s: a + 4 * s * b  # noqa: E731
        whole = spectral_flow(SymmetricFormPath(fn, 0.0, 1.0))
        parts = spectral_flow(SymmetricFormPath(fn, 0.0, 0.37)) + spectral_flow(SymmetricFormPath(fn, 0.37, 1.0))
        assert whole == parts

    def test_homotopy_fixed_ends(self, rng):
        a, b, c = sym(rng, 4), sym(rng, 4), sym(rng, 4)
        plain = SymmetricFormPath(lambda s: a + s * b)
        bent = SymmetricFormPath(lambda s: a + s * b + np.sin(np.pi * s) * c)
        assert spectral_flow(plain) == spectral_flow(bent)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_morse_difference_and_relative_index(self, dim, seed):
        rng = np.random.default_rng(seed)
        s0, s1 = sym(rng, dim), sym(rng, dim)
        path = SymmetricFormPath(lambda s: s0 + s * s1)
        flow = spectral_flow(path)
        assert flow == morse_difference(path)
        assert flow == -relative_morse_index(s0, s0 + s1)


class TestRelativeMorse:
    def test_equal(self):
        t = np.diag([1.0, -1.0])
        assert relative_morse_index(t, t) == 0

    def test_hand_example(self):
        assert relative_morse_index(np.diag([1.0, -1.0]), np.diag([-1.0, -1.0])) == 1

    def test_invertible_pair(self):
        assert relative_morse_index(np.eye(2), np.diag([-1.0, 1.0])) == 1


class TestBlockMorse:
    def test_examples(self):
        assert block_morse_index(np.array([[1.0]]), np.array([[0.0]])) == 1
        assert block_morse_index(np.array([[0.0]]), np.array([[-2.0]])) == 1

    def test_random_against_dense(self, rng):
        for _ in range(50):
            k, m = rng.integers(1, 5, size=2)
            b = rng.normal(size=(k, m))
            if rng.random() < 0.5:
                b[:, 0] = 0.0
            c = sym(rng, m)
            full = np.block([[np.zeros((k, k)), b], [b.T, c]])
            assert block_morse_index(b, c) == int(np.sum(np.linalg.eigvalsh(full) < -1e-9))


class TestFamilies:
    def test_grow_examples(self):
        assert spfl_family_grow(BlockPerturbationFamily([[1.0]], [[1.0]], [[0.0]]), verify=True) == -1
        assert spfl_family_grow(BlockPerturbationFamily([[1.0]], [[0.0]], [[1.0]]), verify=True) == 0

    def test_grow_singular(self):
        with pytest.raises(SingularA):
            spfl_family_grow(BlockPerturbationFamily([[0.0]], [[1.0]], [[0.0]]))

    def test_shrink_examples(self):
        assert spfl_family_shrink(BlockPerturbationFamily([[1.0]], [[1.0]], [[0.0]]), verify=True) == 1
        assert spfl_family_shrink(BlockPerturbationFamily([[2.0]], [[0.0]], [[0.0]]), verify=True) == 0
        assert spfl_family_shrink(BlockPerturbationFamily([[0.0]], [[1.0]], [[0.0]]), verify=True) == 1

    def test_random_verified(self, rng):
        for _ in range(30):
            k, m = rng.integers(1, 4, size=2)
            a = sym(rng, k) + 3 * np.eye(k) * rng.choice([-1, 1])
            fam = BlockPerturbationFamily(a, rng.normal(size=(k, m)), sym(rng, m))
            spfl_family_grow(fam, verify=True)
            spfl_family_shrink(fam, verify=True)
