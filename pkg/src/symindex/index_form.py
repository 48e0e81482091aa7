"""Galerkin discretization of the free- and fixed-period index forms.

Test functions live in H^1_A: u(0) = A u(1).  The basis is built from the
real Schur form A = Z S Z^T of the orthogonal matrix A: eigenvalue +1
directions carry periodic Fourier modes, eigenvalue -1 directions carry
anti-periodic modes, and a rotation block R(theta) carries R(-theta t) times
periodic modes.  Every basis function satisfies the twist exactly.

Both forms are affine in the penalty parameter: I_s = I_0 + s * alpha, so
they are assembled once as a pair of matrices.  The period variation b is
the last coordinate of the free form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import eigh, schur

from .errors import LedgerMismatch, MissingTprime, NotNonNull, S0Exhausted
from .orbit_model import NullClass, OrbitData, geometrical_index, kappa_classify
from .spectral_flow import (
    BlockPerturbationFamily,
    SymmetricFormPath,
    spectral_flow,
    spfl_family_grow,
    spfl_family_shrink,
)
from .symplectic_core import SymmetricMatrix, SymplecticPath, numerical_rank

__all__ = [
    "GalerkinBasis",
    "AssembledForm",
    "FormPair",
    "IndexDifferenceReport",
    "build_basis",
    "assemble_pair",
    "assemble_free",
    "assemble_fixed",
    "choose_s0",
    "analytic_s0_bound",
    "spectral_indices",
    "difference_decomposition",
    "check_relation_geo_spec",
    "eigen_trajectories",
]

QUAD_ORDER = 10
QUAD_TOL = 1e-10
ZERO_REL = 1e-9
S0_MAX_EXP = 20


def _periodic(j: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if j == 0:
        return np.ones_like(t), np.zeros_like(t)
    m = (j + 1) // 2
    w = 2.0 * np.pi * m
    if j % 2:
        return np.cos(w * t), -w * np.sin(w * t)
    return np.sin(w * t), w * np.cos(w * t)


def _antiperiodic(j: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = (2 * (j // 2) + 1) * np.pi
    if j % 2 == 0:
        return np.cos(w * t), -w * np.sin(w * t)
    return np.sin(w * t), w * np.cos(w * t)


@dataclass(frozen=True)
class _Block:
    kind: str  # "plus", "minus" or "rot"
    cols: tuple[int, ...]
    theta: float = 0.0


@dataclass(eq=False)
class GalerkinBasis:
    """n*N A-twisted trigonometric functions, normalized in H^1."""

    n: int
    N: int
    A: np.ndarray
    frame: np.ndarray
    blocks: list[_Block]
    scale: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    @property
    def size(self) -> int:
        return self.n * self.N

    def _raw(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = t.size
        vals = np.zeros((m, self.size, self.n))
        ders = np.zeros((m, self.size, self.n))
        idx = 0
        for blk in self.blocks:
            if blk.kind in ("plus", "minus"):
                mode = _periodic if blk.kind == "plus" else _antiperiodic
                direction = self.frame[:, blk.cols[0]]
                for j in range(self.N):
                    f, df = mode(j, t)
                    vals[:, idx] = f[:, None] * direction
                    ders[:, idx] = df[:, None] * direction
                    idx += 1
                continue
            z = self.frame[:, list(blk.cols)]
            th = blk.theta
            c, s = np.cos(-th * t), np.sin(-th * t)
            for j in range(self.N):
                f, df = _periodic(j, t)
                for e in ((1.0, 0.0), (0.0, 1.0)):
                    # w(t) = R(-theta t) e f(t),  w' = R(-theta t)(-theta J e f + e f')
                    w = np.stack([c * e[0] - s * e[1], s * e[0] + c * e[1]], axis=1) * f[:, None]
                    je = (-e[1], e[0])
                    rje = np.stack([c * je[0] - s * je[1], s * je[0] + c * je[1]], axis=1)
                    rw = np.stack([c * e[0] - s * e[1], s * e[0] + c * e[1]], axis=1)
                    dw = -th * rje * f[:, None] + rw * df[:, None]
                    vals[:, idx] = w @ z.T
                    ders[:, idx] = dw @ z.T
                    idx += 1
        return vals, ders

    def evaluate(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Values and derivatives, each of shape (len(t), n*N, n)."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        vals, ders = self._raw(ts)
        return vals * self.scale[None, :, None], ders * self.scale[None, :, None]

    def boundary_residual(self) -> float:
        v, _ = self.evaluate(np.array([0.0, 1.0]))
        return float(np.max(np.abs(v[0] - v[1] @ self.A.T)))

    def gram(self, panels: int = 64) -> np.ndarray:
        nodes, weights = _composite_gauss(panels, QUAD_ORDER)
        v, d = self.evaluate(nodes)
        return np.einsum("m,mia,mja->ij", weights, v, v) + np.einsum("m,mia,mja->ij", weights, d, d)

    def gram_condition(self) -> float:
        return float(np.linalg.cond(self.gram()))


def _composite_gauss(panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _schur_blocks(a: np.ndarray) -> tuple[np.ndarray, list[_Block]]:
    s, z = schur(a, output="real")
    n = a.shape[0]
    blocks: list[_Block] = []
    i = 0
    while i < n:
        if i + 1 < n and abs(s[i + 1, i]) > 1e-12:
            theta = float(np.arctan2(s[i + 1, i], s[i, i]))
            blocks.append(_Block("rot", (i, i + 1), theta))
            i += 2
        else:
            blocks.append(_Block("plus" if s[i, i] > 0 else "minus", (i,)))
            i += 1
    return z, blocks


def build_basis(orbit: OrbitData | np.ndarray, N: int) -> GalerkinBasis:
    if N < 4:
        raise ValueError("truncation level must be at least 4")
    a = orbit.A if isinstance(orbit, OrbitData) else np.asarray(orbit, dtype=float)
    z, blocks = _schur_blocks(a)
    basis = GalerkinBasis(a.shape[0], int(N), a, z, blocks, scale=np.ones(a.shape[0] * int(N)))
    nodes, weights = _composite_gauss(max(32, 2 * N), QUAD_ORDER)
    v, d = basis._raw(nodes)
    norms = np.einsum("m,mia,mia->i", weights, v, v) + np.einsum("m,mia,mia->i", weights, d, d)
    basis.scale = 1.0 / np.sqrt(norms)
    return basis


@dataclass(frozen=True)
class AssembledForm:
    s: float
    matrix: SymmetricMatrix
    kind: str
    quadrature: dict

    @property
    def size(self) -> int:
        return self.matrix.dim


@dataclass(frozen=True, eq=False)
class FormPair:
    """I_s = base + s * penalty, for one form kind ("free" or "fixed")."""

    kind: str
    base: np.ndarray
    penalty: np.ndarray
    quadrature: dict

    def at(self, s: float) -> np.ndarray:
        return self.base + s * self.penalty

    def form(self, s: float) -> AssembledForm:
        return AssembledForm(float(s), SymmetricMatrix(self.at(s)), self.kind, dict(self.quadrature))

    def path(self, s0: float, samples: int = 96) -> SymmetricFormPath:
        grid = np.unique(np.concatenate([[0.0], np.geomspace(min(1e-4, s0 / 2), s0, samples)]))
        return SymmetricFormPath(self.at, 0.0, s0, grid=grid, derivative=lambda s: self.penalty)

    def zero_tol(self, s: float) -> float:
        eig = np.linalg.eigvalsh(self.at(s))
        return ZERO_REL * max(1.0, float(np.max(np.abs(eig))))


def _require_non_null(orbit: OrbitData) -> NullClass:
    _, cls = kappa_classify(orbit)
    if cls is NullClass.NOT_NON_NULL:
        raise NotNonNull(f"orbit {orbit.name!r} is not non-null (kappa changes sign or vanishes)")
    return cls


def _weighted_gram(left: np.ndarray, mid: np.ndarray, right: np.ndarray) -> np.ndarray:
    """sum_m left[m] @ mid[m] @ right[m]^T for stacks of shape (m, i, a)."""
    lm = np.matmul(left, mid)
    return np.tensordot(lm, right, axes=([0, 2], [0, 2]))


def _raw_blocks(orbit: OrbitData, basis: GalerkinBasis, panels: int) -> dict[str, np.ndarray]:
    nodes, weights = _composite_gauss(panels, QUAD_ORDER)
    c = orbit.coefficients(nodes)
    v, d = basis.evaluate(nodes)
    T = orbit.T
    wd = weights[:, None, None] * d
    wv = weights[:, None, None] * v
    kin = _weighted_gram(wd, c.P, d) / T
    cross = _weighted_gram(v, np.swapaxes(c.Q, 1, 2), wd)
    pot = T * _weighted_gram(wv, c.R, v)
    alpha = _weighted_gram(wv, c.P, v) / T
    px = np.einsum("mab,mb->ma", c.P, c.xprime)
    qtx = np.einsum("mba,mb->ma", c.Q, c.xprime)
    coupling = (-np.einsum("m,ma,mia->i", weights, px, d) / T ** 2
                + np.einsum("m,ma,mia->i", weights, c.Lq - qtx / T, v))
    kappa = float(np.sum(weights * np.einsum("ma,ma->m", px, c.xprime))) / T ** 3
    fixed = kin + cross + cross.T + pot
    return {"fixed": 0.5 * (fixed + fixed.T), "alpha": 0.5 * (alpha + alpha.T),
            "coupling": coupling, "kappa": np.array(kappa)}


def _converged_blocks(orbit: OrbitData, basis: GalerkinBasis) -> tuple[dict[str, np.ndarray], dict]:
    panels = max(8, basis.N)
    prev = _raw_blocks(orbit, basis, panels)
    for _ in range(8):
        panels *= 2
        cur = _raw_blocks(orbit, basis, panels)
        change = max(float(np.max(np.abs(cur[k] - prev[k]))) for k in cur)
        if change <= QUAD_TOL:
            return cur, {"panels": panels, "order": QUAD_ORDER, "max_change": change}
        prev = cur
    return cur, {"panels": panels, "order": QUAD_ORDER, "max_change": change, "converged": False}


def assemble_pair(orbit: OrbitData, basis: GalerkinBasis) -> tuple[FormPair, FormPair]:
    """(free, fixed) form pairs; quadrature is doubled until no entry moves by more than 1e-10."""
    _require_non_null(orbit)
    blocks, quad = _converged_blocks(orbit, basis)
    k = basis.size
    kappa = float(blocks["kappa"])
    free_base = np.zeros((k + 1, k + 1))
    free_base[:k, :k] = blocks["fixed"]
    free_base[:k, k] = blocks["coupling"]
    free_base[k, :k] = blocks["coupling"]
    free_base[k, k] = kappa
    free_pen = np.zeros((k + 1, k + 1))
    free_pen[:k, :k] = blocks["alpha"]
    free_pen[k, k] = kappa
    return (FormPair("free", free_base, free_pen, quad),
            FormPair("fixed", blocks["fixed"].copy(), blocks["alpha"].copy(), quad))


def assemble_free(orbit: OrbitData, basis: GalerkinBasis, s: float) -> AssembledForm:
    return assemble_pair(orbit, basis)[0].form(s)


def assemble_fixed(orbit: OrbitData, basis: GalerkinBasis, s: float) -> AssembledForm:
    return assemble_pair(orbit, basis)[1].form(s)


def _gap_and_index(pair: FormPair, s: float) -> tuple[float, int, float]:
    eig = np.linalg.eigvalsh(pair.at(s))
    tol = ZERO_REL * max(1.0, float(np.max(np.abs(eig))))
    return float(np.min(np.abs(eig))), int(np.sum(eig < -tol)), tol


def last_crossing(pair: FormPair) -> float | None:
    """Largest s at which I_s is degenerate, when the penalty is definite.

    Degeneracy of base + s * penalty means -s is a generalized eigenvalue of
    (base, penalty), a symmetric-definite problem when the penalty is definite.
    Returns None when the penalty is indefinite.
    """
    pen = pair.penalty
    eig = np.linalg.eigvalsh(pen)
    tol = ZERO_REL * max(1.0, float(np.max(np.abs(eig))))
    if np.all(eig > tol):
        sign = 1.0
    elif np.all(eig < -tol):
        sign = -1.0
    else:
        return None
    lam = eigh(pair.base, sign * pen, eigvals_only=True)
    return float(np.max(-sign * lam))


def choose_s0(orbit: OrbitData, basis: GalerkinBasis,
              pairs: tuple[FormPair, FormPair] | None = None) -> tuple[float, float]:
    """Doubling search s0 in {1, 2, 4, ...}.

    Accepts the first s such that both forms have gap >= 10 zero_tol and the
    same Morse index at s and 2s.  When the penalty is definite, s must also
    exceed the last degenerate instant of both forms, which rules out
    crossings beyond s0.
    """
    free, fixed = pairs or assemble_pair(orbit, basis)
    floor = max((c for c in (last_crossing(free), last_crossing(fixed)) if c is not None), default=0.0)
    previous = None
    for e in range(S0_MAX_EXP + 1):
        s = float(2 ** e)
        g1, i1, t1 = _gap_and_index(free, s)
        g2, i2, t2 = _gap_and_index(fixed, s)
        ok = g1 >= 10 * t1 and g2 >= 10 * t2 and s > floor
        if ok and previous is not None and previous[:2] == (i1, i2):
            return previous[2], previous[3]
        previous = (i1, i2, s, min(g1, g2)) if ok else None
    raise S0Exhausted(f"no admissible s0 up to 2^{S0_MAX_EXP}")


def analytic_s0_bound(orbit: OrbitData, samples: int = 513) -> float:
    """Sufficient penalty from the pointwise constants C1..C4 of the non-degeneracy estimate.

    The estimate is a quadratic form in (|Pu'|, |Pu|, b); the returned s is
    the smallest power-of-two multiple of 1/16 making it positive definite
    with sup-norm constants (inf |kappa| in the b-b entry).
    """
    ts = np.linspace(0.0, 1.0, samples)
    c = orbit.coefficients(ts)
    T = orbit.T
    dt = 1e-6
    lo = orbit.coefficients(np.clip(ts - dt, 0.0, 1.0)).P
    hi = orbit.coefficients(np.clip(ts + dt, 0.0, 1.0)).P
    dP = (hi - lo) / (np.clip(ts + dt, 0.0, 1.0) - np.clip(ts - dt, 0.0, 1.0))[:, None, None]
    norm = lambda m: np.linalg.norm(m, 2, axis=(1, 2))  # noqa: E731
    pinv = np.linalg.inv(c.P)
    px = np.linalg.norm(np.einsum("mab,mb->ma", c.P, c.xprime), axis=1)
    lq_qt = np.linalg.norm(c.Lq - np.einsum("mba,mb->ma", c.Q, c.xprime) / T, axis=1)
    lq_q = np.linalg.norm(c.Lq - np.einsum("mab,mb->ma", c.Q, c.xprime) / T, axis=1)
    dpp = norm(dP @ pinv)
    qp = norm(c.Q @ pinv)
    qtp = norm(np.swapaxes(c.Q, 1, 2) @ pinv)
    c1 = float(np.max(dpp / T ** 2 + qp / T + qtp / T))
    c2 = float(np.max(qp * dpp / T + norm(c.R @ pinv)))
    c3 = float(np.max(px / T ** 3 + px * norm(pinv) / T ** 2 + lq_qt / T))
    c4 = float(np.max(px * norm(c.P @ pinv) / T ** 3 + lq_q * norm(pinv)))
    kmin = float(np.min(np.abs(orbit.kappa(ts))))

    def positive(s):
        m = np.array([[1 / T ** 2, -c1 / 2, -c3 / 2],
                      [-c1 / 2, s / T ** 2 - c2, -c4 / 2],
                      [-c3 / 2, -c4 / 2, (s + 1) * kmin / T ** 3]])
        return np.min(np.linalg.eigvalsh(m)) > 0

    s = 1.0 / 16
    while not positive(s):
        s *= 2
        if s > 2.0 ** 60:
            return float("inf")
    return s


@dataclass
class SpectralIndexResult:
    ispec_free: int
    ispec_fixed: int
    s0: float
    gap: float
    free: FormPair
    fixed: FormPair

    def __iter__(self):
        return iter((self.ispec_free, self.ispec_fixed))


def spectral_indices(orbit: OrbitData, basis: GalerkinBasis, s0: float | None = None,
                     pairs: tuple[FormPair, FormPair] | None = None) -> SpectralIndexResult:
    """Spectral flows of s -> I_s and s -> I_{s,T} over [0, s0]."""
    free, fixed = pairs or assemble_pair(orbit, basis)
    if s0 is None:
        s0, gap = choose_s0(orbit, basis, (free, fixed))
    else:
        gap = min(_gap_and_index(free, s0)[0], _gap_and_index(fixed, s0)[0])
    i_free = spectral_flow(free.path(s0), zero_rel=ZERO_REL)
    i_fixed = spectral_flow(fixed.path(s0), zero_rel=ZERO_REL)
    return SpectralIndexResult(i_free, i_fixed, s0, gap, free, fixed)


@dataclass(frozen=True)
class IndexDifferenceReport:
    ispec_free: int
    ispec_fixed: int
    leg_0: int
    leg_s0: int
    fixed_flow: int
    kappa_sign: int
    tprime_sign: int
    table_total: int
    table_leg_0: int
    table_leg_s0: int

    @property
    def difference(self) -> int:
        return self.ispec_free - self.ispec_fixed

    @property
    def matches_table(self) -> bool:
        return (self.difference == self.table_total and self.leg_0 == self.table_leg_0
                and self.leg_s0 == self.table_leg_s0)


def difference_table(kappa_sign: int, tprime: float) -> tuple[int, int, int]:
    """(total, leg at s=0, leg at s0) as tabulated for the four sign branches; T' = 0 joins T' >= 0."""
    leg_0 = 1 if tprime >= 0 else 0
    leg_s0 = 1 if kappa_sign < 0 else 0
    return leg_0 + leg_s0, leg_0, leg_s0


def difference_decomposition(orbit: OrbitData, basis: GalerkinBasis,
                             indices: SpectralIndexResult | None = None) -> IndexDifferenceReport:
    """Split ispec_free - ispec_fixed into the two decoupling legs of the block homotopy.

    With A(s) the fixed form, B the b-column and C(s) = (1 + s) int kappa / T^3,
    the free flow equals flow[A(0) block decoupled] + flow[A(s), s in [0, s0]]
    + flow[recoupling at s0].  The legs are evaluated in closed form and the
    identity is checked exactly.
    """
    if orbit.tprime_h is None:
        raise MissingTprime(f"orbit {orbit.name!r} has no period slope")
    cls = _require_non_null(orbit)
    res = indices or spectral_indices(orbit, basis)
    k = basis.size
    m0 = res.free.at(0.0)
    ms0 = res.free.at(res.s0)
    fam0 = BlockPerturbationFamily(m0[:k, :k], m0[:k, k:], m0[k:, k:])
    fam_s0 = BlockPerturbationFamily(ms0[:k, :k], ms0[:k, k:], ms0[k:, k:])
    leg_0 = spfl_family_shrink(fam0, zero_rel=ZERO_REL)
    leg_s0 = spfl_family_grow(fam_s0, gap=res.gap * 0.5)
    if leg_0 + res.ispec_fixed + leg_s0 != res.ispec_free:
        raise LedgerMismatch(
            f"legs {leg_0} + {res.ispec_fixed} + {leg_s0} do not add up to the free flow {res.ispec_free}")
    ksign = 1 if cls is NullClass.L_POSITIVE else -1
    total, t0, ts0 = difference_table(ksign, orbit.tprime_h)
    return IndexDifferenceReport(res.ispec_free, res.ispec_fixed, leg_0, leg_s0, res.ispec_fixed, ksign,
                                 1 if orbit.tprime_h > 0 else (-1 if orbit.tprime_h < 0 else 0),
                                 total, t0, ts0)


def check_relation_geo_spec(orbit: OrbitData, basis: GalerkinBasis, psi: SymplecticPath,
                            ispec_fixed: int | None = None) -> tuple[bool, int, int]:
    """(igeo == ispec_fixed + dim ker(A - I), igeo, right-hand side)."""
    igeo, _ = geometrical_index(orbit, psi)
    if ispec_fixed is None:
        ispec_fixed = spectral_indices(orbit, basis).ispec_fixed
    rhs = ispec_fixed + orbit.n - numerical_rank(orbit.A - np.eye(orbit.n), 1e-8)
    return igeo == rhs, igeo, rhs


def eigen_trajectories(pair: FormPair, s0: float, samples: int = 64, count: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """The ``count`` eigenvalues closest to zero along a geometric s-grid (for plotting)."""
    grid = np.concatenate([[0.0], np.geomspace(min(1e-3, s0 / 4), s0, samples - 1)])
    rows = []
    for s in grid:
        eig = np.linalg.eigvalsh(pair.at(s))
        rows.append(np.sort(eig[np.argsort(np.abs(eig))[:count]]))
    return grid, np.array(rows)


def fixed_kernel(pair: FormPair, basis: GalerkinBasis, rel: float = 1e-7) -> np.ndarray:
    """Coefficient vectors spanning the numerical kernel of the fixed form at s = 0."""
    eig, vec = np.linalg.eigh(pair.at(0.0))
    tol = rel * max(1.0, float(np.max(np.abs(eig))))
    return vec[:, np.abs(eig) <= tol]


__all__ += ["SpectralIndexResult", "difference_table", "fixed_kernel", "last_crossing"]
