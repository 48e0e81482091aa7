"""Linear-algebra substrate for symplectic index computations.

Conventions: the standard complex structure is ``J = [[0, -I], [I, 0]]`` and
the symplectic form is ``omega(a, b) = <J a, b>``.  On the doubled space
``R^2n x R^2n`` carrying ``-omega x omega`` the matching complex structure is
``diag(-J, J)``; graphs of symplectic maps are Lagrangian there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg as sla

from .errors import AsymmetricMatrix, NotLagrangian, NotSymplectic, OddDimension

__all__ = [
    "SYMPL_TOL",
    "SVD_REL_TOL",
    "standard_j",
    "product_j",
    "SymmetricMatrix",
    "SymplecticMatrix",
    "LagrangianSubspace",
    "SpComponent",
    "SymplecticPath",
    "validate_symplectic",
    "signature",
    "morse_index",
    "numerical_rank",
    "null_space",
    "sp_component",
    "graph_lagrangian",
    "diagonal_lagrangian",
    "rotation",
    "rotate",
    "intersection_dim",
    "symplectic_residual",
    "polar_unitary_phase",
]

SYMPL_TOL = 1e-10
SVD_REL_TOL = 1e-9
ASYM_TOL = 1e-8
ZERO_ABS_FLOOR = 1e-12


def standard_j(n: int) -> np.ndarray:
    """The 2n x 2n standard symplectic matrix [[0, -I], [I, 0]]."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def product_j(n: int) -> np.ndarray:
    """Complex structure diag(-J, J) of (R^2n x R^2n, -omega x omega)."""
    j = standard_j(n)
    return sla.block_diag(-j, j)


def _half_dim(m: np.ndarray) -> int:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise OddDimension(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] % 2:
        raise OddDimension(f"dimension {m.shape[0]} is odd")
    return m.shape[0] // 2


def symplectic_residual(m: np.ndarray) -> float:
    """Max-norm residual ||M^T J M - J||."""
    n = _half_dim(m)
    j = standard_j(n)
    return float(np.max(np.abs(m.T @ j @ m - j))) if n else 0.0


@dataclass(frozen=True)
class SymmetricMatrix:
    """Real symmetric matrix, symmetrized on construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise AsymmetricMatrix(f"expected a square matrix, got shape {a.shape}")
        asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
        if asym > ASYM_TOL * max(1.0, float(np.max(np.abs(a))) if a.size else 1.0):
            raise AsymmetricMatrix(f"asymmetry {asym:.3e} exceeds tolerance")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SymplecticMatrix:
    entries: np.ndarray
    residual: float = 0.0

    @property
    def n(self) -> int:
        return self.entries.shape[0] // 2


class SpComponent(enum.Enum):
    PLUS = "Plus"
    ZERO = "Zero"
    MINUS = "Minus"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class LagrangianSubspace:
    """Lagrangian subspace given by a full-rank frame.

    ``omega`` is the complex structure representing the ambient symplectic
    form (``J`` for R^2n, ``diag(-J, J)`` for a doubled space).
    """

    frame: np.ndarray
    omega: np.ndarray = field(default=None)  # type: ignore[assignment]
    iso_tol: float = 1e-9

    def __post_init__(self):
        f = np.array(self.frame, dtype=float)
        if f.ndim != 2 or f.shape[0] != 2 * f.shape[1]:
            raise NotLagrangian(f"frame must be 2n x n, got {f.shape}")
        n = f.shape[1]
        om = standard_j(n) if self.omega is None else np.array(self.omega, dtype=float)
        scale = max(1.0, float(np.linalg.norm(f, 2)) ** 2)
        iso = float(np.max(np.abs(f.T @ om @ f))) if n else 0.0
        if iso > self.iso_tol * scale:
            raise NotLagrangian(f"isotropy residual {iso:.3e}")
        if n and numerical_rank(f) < n:
            raise NotLagrangian("frame is rank deficient")
        f.setflags(write=False)
        om.setflags(write=False)
        object.__setattr__(self, "frame", f)
        object.__setattr__(self, "omega", om)

    @property
    def n(self) -> int:
        return self.frame.shape[1]

    def orthonormal_frame(self) -> np.ndarray:
        q, _ = np.linalg.qr(self.frame)
        return q


def validate_symplectic(m, tol: float = SYMPL_TOL) -> SymplecticMatrix:
    """Accept ``m`` as a symplectic matrix or raise NotSymplectic."""
    a = np.array(m, dtype=float)
    _half_dim(a)
    res = symplectic_residual(a)
    if res > tol:
        raise NotSymplectic(res)
    a.setflags(write=False)
    return SymplecticMatrix(a, res)


def _as_array(s) -> np.ndarray:
    if isinstance(s, SymmetricMatrix):
        return s.entries
    if isinstance(s, SymplecticMatrix):
        return s.entries
    return np.asarray(s, dtype=float)


def _zero_tol(eigs: np.ndarray, zero_tol: float | None, rel: float = SVD_REL_TOL) -> float:
    if zero_tol is not None:
        return zero_tol
    scale = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    return max(ZERO_ABS_FLOOR, rel * scale)


def signature(s, zero_tol: float | None = None) -> tuple[int, int, int]:
    """Inertia ``(n_plus, n_zero, n_minus)`` of a symmetric matrix.

    Without an explicit ``zero_tol`` eigenvalues are treated as zero below
    ``1e-9`` times the spectral radius (with an absolute floor of 1e-12).
    """
    a = _as_array(s)
    if a.size == 0:
        return (0, 0, 0)
    a = 0.5 * (a + a.T)
    eigs = np.linalg.eigvalsh(a)
    tol = _zero_tol(eigs, zero_tol)
    n_plus = int(np.sum(eigs > tol))
    n_minus = int(np.sum(eigs < -tol))
    return n_plus, a.shape[0] - n_plus - n_minus, n_minus


def morse_index(s, zero_tol: float | None = None) -> int:
    return signature(s, zero_tol)[2]


def numerical_rank(m: np.ndarray, rel_tol: float = SVD_REL_TOL) -> int:
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[0] <= ZERO_ABS_FLOOR:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


def null_space(m: np.ndarray, rel_tol: float = SVD_REL_TOL, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis of the numerical kernel of ``m`` (columns)."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[1] == 0:
        return np.zeros((0, 0))
    if m.shape[0] == 0:
        return np.eye(m.shape[1])
    _, sv, vt = np.linalg.svd(m)
    ref = scale if scale is not None else (sv[0] if sv.size else 0.0)
    tol = max(ZERO_ABS_FLOOR, rel_tol * ref)
    rank = int(np.sum(sv > tol))
    return vt[rank:].T.copy()


def sp_component(m, det_tol: float | None = None) -> SpComponent:
    """Locate ``m`` in Sp(2n)^+, Sp(2n)^0 or Sp(2n)^- by the sign of det(M - I)."""
    a = _as_array(m)
    n = _half_dim(a)
    d = float(np.linalg.det(a - np.eye(2 * n)))
    if det_tol is None:
        det_tol = 1e-10 * max(1.0, float(np.linalg.norm(a, 2))) ** n
    if d > det_tol:
        return SpComponent.PLUS
    if d < -det_tol:
        return SpComponent.MINUS
    return SpComponent.ZERO


def graph_lagrangian(m) -> LagrangianSubspace:
    """Graph {(x, Mx)} as a Lagrangian of (R^2n x R^2n, -omega x omega)."""
    a = _as_array(m)
    n = _half_dim(a)
    frame = np.vstack([np.eye(2 * n), a])
    return LagrangianSubspace(frame, product_j(n))


def diagonal_lagrangian(n: int) -> LagrangianSubspace:
    """The diagonal Gr(I) of the doubled space of R^2n."""
    return graph_lagrangian(np.eye(2 * n))


def rotation(n: int, theta: float, omega: np.ndarray | None = None) -> np.ndarray:
    """Closed form of exp(theta * Omega) for a complex structure Omega."""
    om = standard_j(n) if omega is None else omega
    return np.cos(theta) * np.eye(om.shape[0]) + np.sin(theta) * om


def rotate(obj, theta: float):
    """Left-multiply by exp(theta * J) (the ambient complex structure for subspaces)."""
    if isinstance(obj, LagrangianSubspace):
        r = rotation(0, theta, obj.omega)
        return LagrangianSubspace(r @ obj.frame, obj.omega, obj.iso_tol)
    a = _as_array(obj)
    n = _half_dim(a)
    out = rotation(n, theta) @ a
    if isinstance(obj, SymplecticMatrix):
        return SymplecticMatrix(out, symplectic_residual(out))
    return out


def intersection_dim(l1: LagrangianSubspace, l2: LagrangianSubspace, rel_tol: float = 1e-8) -> int:
    """dim(L1 cap L2) from the rank of the stacked orthonormal frames."""
    f = np.hstack([l1.orthonormal_frame(), l2.orthonormal_frame()])
    return l1.n + l2.n - numerical_rank(f, rel_tol)


def polar_unitary_phase(m: np.ndarray) -> complex:
    """det of the unitary polar factor of a symplectic matrix, as a complex number.

    The orthogonal polar factor U of a symplectic matrix is symplectic, hence of
    the form [[X, -Y], [Y, X]]; the returned value is det(X + iY).
    """
    n = m.shape[0] // 2
    if n == 0:
        return 1.0 + 0.0j
    u, _, vt = np.linalg.svd(m)
    orth = u @ vt
    x = orth[:n, :n]
    y = orth[n:, :n]
    return complex(np.linalg.det(x + 1j * y))


class SymplecticPath:
    """Time-sampled path of 2n x 2n symplectic matrices.

    Refinement: if an exact evaluator is attached it is used; otherwise the
    path is interpolated piecewise by exp((t - t_k) G_k) psi_k where
    ``G_k = log(psi_{k+1} psi_k^{-1}) / dt`` lies in the symplectic Lie
    algebra, so interpolants remain exactly symplectic and pass through the
    samples.
    """

    def __init__(
        self,
        times: Sequence[float],
        mats: np.ndarray,
        evaluator: Callable[[float], np.ndarray] | None = None,
        derivative: Callable[[float], np.ndarray] | None = None,
    ):
        t = np.asarray(times, dtype=float)
        mats = np.asarray(mats, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing with at least two entries")
        if mats.shape[0] != t.size:
            raise ValueError("one matrix per sample time is required")
        self.times = t
        self.mats = mats
        self.dim = mats.shape[1]
        self._evaluator = evaluator
        self._derivative = derivative
        self._gens: dict[int, np.ndarray] = {}
        self.meta: dict = {}

    @classmethod
    def from_function(cls, fn: Callable[[float], np.ndarray], a: float = 0.0, b: float = 1.0,
                      samples: int = 129, derivative: Callable[[float], np.ndarray] | None = None):
        ts = np.linspace(a, b, samples)
        mats = np.array([fn(t) for t in ts])
        return cls(ts, mats, evaluator=fn, derivative=derivative)

    @property
    def a(self) -> float:
        return float(self.times[0])

    @property
    def b(self) -> float:
        return float(self.times[-1])

    @property
    def n(self) -> int:
        return self.dim // 2

    def _generator(self, k: int) -> np.ndarray:
        g = self._gens.get(k)
        if g is None:
            step = self.mats[k + 1] @ np.linalg.inv(self.mats[k])
            g = np.real(sla.logm(step)) / (self.times[k + 1] - self.times[k])
            self._gens[k] = g
        return g

    def _interval(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(k, 0), self.times.size - 2)

    def __call__(self, t: float) -> np.ndarray:
        if self._evaluator is not None:
            return np.asarray(self._evaluator(t), dtype=float)
        k = self._interval(t)
        dt = t - self.times[k]
        if dt == 0.0:
            return self.mats[k].copy()
        if t == self.times[k + 1]:
            return self.mats[k + 1].copy()
        return sla.expm(dt * self._generator(k)) @ self.mats[k]

    def derivative(self, t: float) -> np.ndarray:
        if self._derivative is not None:
            return np.asarray(self._derivative(t), dtype=float)
        if self._evaluator is not None:
            h = 1e-6 * max(1.0, self.b - self.a)
            return (self._evaluator(t + h) - self._evaluator(t - h)) / (2 * h)
        k = self._interval(t)
        return self._generator(k) @ self(t)

    def transform(self, left: np.ndarray | None = None, right: np.ndarray | None = None) -> "SymplecticPath":
        """Path t -> left @ psi(t) @ right with the same sampling."""
        lm = np.eye(self.dim) if left is None else left
        rm = np.eye(self.dim) if right is None else right
        ev = None if self._evaluator is None else (lambda t, f=self._evaluator: lm @ f(t) @ rm)
        out = SymplecticPath(self.times, lm @ self.mats @ rm, evaluator=ev)
        if self._evaluator is None:
            out._gens = {k: lm @ g @ np.linalg.inv(lm) for k, g in self._gens.items()}
        return out

    def max_residual(self) -> float:
        if self.n == 0:
            return 0.0
        j = standard_j(self.n)
        res = np.einsum("kji,jl,klm->kim", self.mats, j, self.mats) - j
        return float(np.max(np.abs(res)))

    def restrict(self, a: float, b: float, samples: int | None = None) -> "SymplecticPath":
        count = samples or max(17, int(np.sum((self.times >= a) & (self.times <= b))))
        ts = np.linspace(a, b, count)
        return SymplecticPath(ts, np.array([self(t) for t in ts]), evaluator=self._evaluator)
