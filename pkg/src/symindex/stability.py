"""Orbit-cylinder splitting, Floquet stability and the parity criteria.

The monodromy of a periodic orbit lying on an orbit cylinder fixes the
velocity vector ``v0`` and shears a partner ``w0`` along it:
``M w0 = w0 + c v0`` with ``c = -T'(h)``.  Transporting a symplectic frame of
the symplectic complement of ``span(w0, v0)`` along the fundamental solution
conjugates the whole path into ``[[1, 0], [c t, 1]] (+) P_x(t)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import expm, logm

from .errors import LedgerMismatch, MissingTprime, NoCylinderBlock, NotNonNull, SplitResidualTooLarge
from .maslov import clm_graph_index
from .orbit_model import NullClass, OrbitData
from .symplectic_core import SymplecticMatrix, SymplecticPath, standard_j

__all__ = [
    "StabilityTag",
    "CriterionOutcome",
    "MultiplierCluster",
    "StabilityVerdict",
    "SplitMonodromy",
    "ParityLedger",
    "velocity_vector",
    "multiplier_clusters",
    "stability_classify",
    "splitting_reduce",
    "clm_parity_instability",
    "instability_criterion",
    "parity_audit",
]

SPLIT_TOL = 1e-6


class StabilityTag(enum.Enum):
    LINEARLY_STABLE = "LinearlyStable"
    SPECTRALLY_STABLE_NOT_LINEARLY = "SpectrallyStableNotLinearly"
    UNSTABLE = "Unstable"

    def __str__(self) -> str:
        return self.value


class CriterionOutcome(enum.Enum):
    CERTIFIED_UNSTABLE = "CertifiedUnstable"
    INCONCLUSIVE = "Inconclusive"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class MultiplierCluster:
    value: complex
    algebraic: int
    geometric: int

    @property
    def semisimple(self) -> bool:
        return self.algebraic == self.geometric


@dataclass(frozen=True)
class StabilityVerdict:
    tag: StabilityTag
    multipliers: tuple[MultiplierCluster, ...]

    @property
    def eigenvalues(self) -> list[complex]:
        return [c.value for c in self.multipliers for _ in range(c.algebraic)]


@dataclass
class SplitMonodromy:
    gamma1_slope: float
    px_path: SymplecticPath
    conjugator: SymplecticMatrix
    residual: float
    frame_winding: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def px1(self) -> SymplecticMatrix:
        m = self.px_path.mats[-1]
        return SymplecticMatrix(m)


def multiplier_clusters(m: np.ndarray, cluster_tol: float = 1e-7, rank_tol: float = 1e-7) -> list[MultiplierCluster]:
    """Eigenvalues grouped by single linkage, with algebraic and geometric multiplicities.

    Jordan blocks split under round-off by about sqrt(machine eps), so the
    merge radius never drops below that scale.
    """
    a = m.entries if isinstance(m, SymplecticMatrix) else np.asarray(m, dtype=float)
    dim = a.shape[0]
    if dim == 0:
        return []
    ev = np.linalg.eigvals(a)
    norm = max(1.0, float(np.linalg.norm(a, 2)))
    radius = max(cluster_tol, 10.0 * np.sqrt(np.finfo(float).eps * norm))
    labels = list(range(dim))

    def root(i):
        while labels[i] != i:
            labels[i] = labels[labels[i]]
            i = labels[i]
        return i

    for i in range(dim):
        for j in range(i + 1, dim):
            if abs(ev[i] - ev[j]) <= radius:
                labels[root(i)] = root(j)
    groups: dict[int, list[complex]] = {}
    for i in range(dim):
        groups.setdefault(root(i), []).append(ev[i])
    out = []
    for members in groups.values():
        lam = complex(np.mean(members))
        sv = np.linalg.svd(a - lam * np.eye(dim), compute_uv=False)
        rank = int(np.sum(sv > rank_tol * max(1.0, sv[0])))
        out.append(MultiplierCluster(lam, len(members), min(dim - rank, len(members))))
    out.sort(key=lambda c: (round(np.angle(c.value), 9), abs(c.value)))
    return out


def stability_classify(px1: SymplecticMatrix | np.ndarray, tol: float = 1e-8,
                       cluster_tol: float = 1e-7, rank_tol: float = 1e-7) -> StabilityVerdict:
    clusters = tuple(multiplier_clusters(px1, cluster_tol, rank_tol))
    if any(abs(abs(c.value) - 1.0) > tol for c in clusters):
        return StabilityVerdict(StabilityTag.UNSTABLE, clusters)
    if all(c.semisimple for c in clusters):
        return StabilityVerdict(StabilityTag.LINEARLY_STABLE, clusters)
    return StabilityVerdict(StabilityTag.SPECTRALLY_STABLE_NOT_LINEARLY, clusters)


def velocity_vector(orbit: OrbitData) -> np.ndarray:
    """(y, u) of the time-translation Jacobi field, normalised to d/ds of the orbit.

    With u = x'/T the energy-derivative field is sheared by exactly -T'(h) v0
    over one period.
    """
    c = orbit.coefficients(np.array([0.0]))
    T = orbit.T
    u = c.xprime[0] / T
    y = c.P[0] @ (c.xsecond[0] / T) / T + c.Q[0] @ u
    return np.concatenate([y, u])


def _omega(x: np.ndarray, y: np.ndarray, j: np.ndarray) -> np.ndarray:
    """omega(x, y) = <J x, y>; broadcasts over frame columns."""
    return (j @ x).T @ y


def _cylinder_partner(mono: np.ndarray, v0: np.ndarray, j: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Min-norm (w, c) with (M - I) w = c v0 and omega(w, v0) = 1."""
    dim = mono.shape[0]
    system = np.zeros((dim + 1, dim + 1))
    system[:dim, :dim] = mono - np.eye(dim)
    system[:dim, dim] = -v0
    system[dim, :dim] = (j.T @ v0)
    rhs = np.zeros(dim + 1)
    rhs[dim] = 1.0
    sol, *_ = np.linalg.lstsq(system, rhs, rcond=1e-10)
    res = float(np.max(np.abs(system @ sol - rhs))) / max(1.0, float(np.max(np.abs(system))))
    return sol[:dim], float(sol[dim]), res


def _eigenvalue_one_multiplicity(mono: np.ndarray) -> int:
    return sum(c.algebraic for c in multiplier_clusters(mono, 1e-6) if abs(c.value - 1.0) <= 1e-4)


def _project(x: np.ndarray, a: np.ndarray, b: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Symplectic projection onto the complement of span(a, b), omega(a, b) = 1."""
    return x - np.outer(a, _omega(x, b, j)) + np.outer(b, _omega(x, a, j))


def _symplectic_gram_schmidt(frame: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Symplectic basis [e_1..e_k, f_1..f_k] from the columns of ``frame`` (same order)."""
    k = frame.shape[1] // 2
    es, fs = [], []
    for i in range(k):
        e = frame[:, i].copy()
        f = frame[:, k + i].copy()
        for ep, fp in zip(es, fs):
            e = e - ep * _omega(e, fp, j) + fp * _omega(e, ep, j)
            f = f - ep * _omega(f, fp, j) + fp * _omega(f, ep, j)
        w = float(_omega(e, f, j))
        if abs(w) < 1e-12:
            raise SplitResidualTooLarge(abs(w))
        scale = np.sqrt(abs(w))
        e, f = e / scale, np.sign(w) * f / scale
        # rebalance inside the pair by an SL(2) factor: orthogonal, equal norms
        pair = np.column_stack([e, f])
        gram = pair.T @ pair
        vals, vecs = np.linalg.eigh(gram)
        pair = pair @ (vecs @ np.diag(vals ** -0.5) @ vecs.T) * np.prod(vals) ** 0.25
        e, f = pair[:, 0], pair[:, 1]
        es.append(e)
        fs.append(f)
    return np.column_stack(es + fs) if k else frame[:, :0]


def _coords(frame: np.ndarray, x: np.ndarray, jk: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Coordinates in a symplectic frame: F^T J F = J_k, so c = -J_k F^T J x."""
    return -jk @ frame.T @ j @ x


def _unitary_phase(s: np.ndarray) -> float:
    """arg det of the unitary part of a symplectic matrix (J-commuting polar factor)."""
    u, _, vt = np.linalg.svd(s)
    q = u @ vt
    n = q.shape[0] // 2
    return float(np.angle(np.linalg.det(q[:n, :n] + 1j * q[n:, :n])))


def _winding(mats: np.ndarray) -> int:
    phases = np.unwrap([_unitary_phase(m) for m in mats])
    return int(round((phases[-1] - phases[0]) / (2.0 * np.pi)))


def _unitary_log(a_d: np.ndarray) -> np.ndarray:
    """Real generator of a J-commuting orthogonal matrix, principal branch."""
    n = a_d.shape[0] // 2
    u = a_d[:n, :n] + 1j * a_d[n:, :n]
    h = logm(u)
    h = 0.5 * (h - h.conj().T)
    x, y = h.real, h.imag
    return np.block([[x, -y], [y, x]])


def _closing_leg(g1: np.ndarray) -> np.ndarray:
    """Generators (log U, log P) of the polar factors of g1 in Sp(2k)."""
    u, s, vt = np.linalg.svd(g1)
    q = u @ vt
    p = vt.T @ np.diag(s) @ vt
    lq = _unitary_log(q) if q.size else q
    lp = logm(p).real if p.size else p
    return lq, 0.5 * (lp + lp.T)


def splitting_reduce(orbit: OrbitData, psi: SymplecticPath, split_tol: float = SPLIT_TOL) -> SplitMonodromy:
    """Conjugate the orbit's monodromy path into the cylinder shear (+) P_x(t).

    The complement frame is parallel-transported along psi (projection and
    symplectic Gram-Schmidt), closed up with a polar leg and twisted by a
    unitary loop so that the frame loop carries no Maslov winding.  When A_d
    fixes the cylinder plane (every built-in preset) the frames close onto
    themselves and P_x starts at the transverse block of A_d, so that
    igeo = iota(gamma_1) + iota(gamma_2).  Otherwise the frames close onto
    A_d^{-1} C and P_x starts at the identity (``meta["twisted"]`` is False).
    """
    if orbit.tprime_h is None:
        raise MissingTprime(f"orbit {orbit.name!r} has no T'(h); the cylinder splitting needs it")
    n = orbit.n
    j = standard_j(n)
    ad = orbit.A_d
    mono = ad @ psi.mats[-1]
    if _eigenvalue_one_multiplicity(mono) < 2:
        raise NoCylinderBlock("the eigenvalue-1 generalized eigenspace of the monodromy is below dimension 2")
    v0 = velocity_vector(orbit)
    scale = max(1.0, float(np.linalg.norm(mono, 2)))
    fixed_res = float(np.linalg.norm(mono @ v0 - v0)) / (scale * max(1e-300, float(np.linalg.norm(v0))))
    w0, c, lsq_res = _cylinder_partner(mono, v0, j)
    twisted = bool(np.allclose(ad @ v0, v0, atol=1e-12 * max(1.0, np.linalg.norm(v0)))
                   and np.allclose(ad @ w0, w0, atol=1e-10 * max(1.0, np.linalg.norm(w0))))
    close_to = np.eye(2 * n) if twisted else ad.T

    k = n - 1
    jk = standard_j(k) if k else np.zeros((0, 0))
    ts = psi.times
    span = ts[-1] - ts[0]
    mats = psi.mats
    cyl_a = np.einsum("kij,kj->ki", mats, w0[None, :] - c * (ts - ts[0])[:, None] / span * v0[None, :])
    cyl_b = mats @ v0
    c_frame = _complement_frame(_project(np.eye(2 * n), w0, v0, j), j, k)
    frames = np.empty((ts.size, 2 * n, 2 * k))
    frames[0] = c_frame
    for i in range(1, ts.size):
        if k:
            frames[i] = _symplectic_gram_schmidt(_project(frames[i - 1], cyl_a[i], cyl_b[i], j), j)

    winding = 0
    if k:
        g1 = _coords(frames[-1], close_to @ c_frame, jk, j)
        lq, lp = _closing_leg(g1)
        frac = (ts - ts[0]) / span
        frames = np.array([frames[i] @ expm(f * lq) @ expm(f * lp) for i, f in enumerate(frac)])
        full = _full_frames(frames, cyl_a, cyl_b, n, k)
        ref = _unitary_log(close_to)
        f0_inv = _sp_inverse(full[0], j)
        loop = np.array([full[i] @ f0_inv @ expm(-f * ref) for i, f in enumerate(frac)])
        winding = _winding(loop)
        if winding:
            twist = np.zeros((2 * k, 2 * k))
            twist[0, k] = 2.0 * np.pi * winding
            twist[k, 0] = -2.0 * np.pi * winding
            frames = np.array([frames[i] @ expm(f * twist) for i, f in enumerate(frac)])
    full = _full_frames(frames, cyl_a, cyl_b, n, k)
    conj = np.array([_sp_inverse(full[i], j) @ mats[i] @ full[0] for i in range(ts.size)])
    start = _sp_inverse(full[0], j) @ ad @ full[0] if twisted else np.eye(2 * n)
    conj = np.einsum("ij,kjl->kil", start, conj)

    cyl = [0, n]
    rest = [r for r in range(2 * n) if r not in cyl]
    frac = (ts - ts[0]) / span
    expected = np.zeros((ts.size, 2, 2))
    expected[:, 0, 0] = expected[:, 1, 1] = 1.0
    expected[:, 1, 0] = c * frac
    gscale = max(1.0, float(np.max(np.abs(conj))))
    parts = {
        "cylinder": float(np.max(np.abs(conj[:, cyl][:, :, cyl] - expected))),
        "off_block": float(max(np.max(np.abs(conj[:, cyl][:, :, rest])), np.max(np.abs(conj[:, rest][:, :, cyl])))) if rest else 0.0,
    }
    closure = float(np.max(np.abs(full[-1] - close_to @ full[0]))) / max(1.0, float(np.max(np.abs(full[0]))))
    residual = max(parts["cylinder"] / gscale, parts["off_block"] / gscale, closure, fixed_res, lsq_res)
    meta = {"v0": v0, "w0": w0, "twisted": twisted, "fixed_residual": fixed_res, "partner_residual": lsq_res,
            "closure": closure, **parts}
    if residual > split_tol:
        err = SplitResidualTooLarge(residual)
        err.meta = meta
        raise err
    px = conj[:, rest][:, :, rest] if k else np.zeros((ts.size, 0, 0))
    return SplitMonodromy(gamma1_slope=c, px_path=SymplecticPath(ts, px), conjugator=SymplecticMatrix(full[0]),
                          residual=residual, frame_winding=winding, meta=meta)


def _sp_inverse(f: np.ndarray, j: np.ndarray) -> np.ndarray:
    return -j @ f.T @ j


def _full_frames(frames: np.ndarray, cyl_a: np.ndarray, cyl_b: np.ndarray, n: int, k: int) -> np.ndarray:
    """[a, e_1..e_k, b, f_1..f_k] per sample: symplectic frames of R^2n in (y, u) order."""
    out = np.empty((cyl_a.shape[0], 2 * n, 2 * n))
    out[:, :, 0] = cyl_a
    out[:, :, n] = cyl_b
    out[:, :, 1:n] = frames[:, :, :k]
    out[:, :, n + 1:] = frames[:, :, k:]
    return out


def _complement_frame(projected: np.ndarray, j: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return projected[:, :0]
    n = k + 1
    # pick k conjugate coordinate pairs (y_i, u_i) whose projections are best conditioned
    pairs = []
    for i in range(n):
        e, f = projected[:, i], projected[:, n + i]
        pairs.append((abs(float(_omega(e, f, j))), i))
    pairs.sort(reverse=True)
    chosen = sorted(i for _, i in pairs[:k])
    frame = np.column_stack([projected[:, i] for i in chosen] + [projected[:, n + i] for i in chosen])
    return _symplectic_gram_schmidt(frame, j)


def clm_parity_instability(px_path: SymplecticPath, index: int | None = None) -> CriterionOutcome:
    """Odd iota_CLM(Delta, Gr(P_x)) certifies linear instability."""
    value = clm_graph_index(px_path) if index is None else index
    return CriterionOutcome.CERTIFIED_UNSTABLE if value % 2 else CriterionOutcome.INCONCLUSIVE


_UNSET: Any = object()


def instability_criterion(null_class: NullClass, orientation: int, ispec_free: int, n: int,
                          tprime_h: float | None = _UNSET) -> CriterionOutcome:
    """Parity table: L-positive unstable for (OR, even) or (NOR, odd); L-negative for (OR, odd) or (NOR, even).

    ``orientation`` is +1 (orientation preserving) or -1; the parity is that
    of ``ispec_free + n``.
    """
    if null_class is NullClass.NOT_NON_NULL:
        raise NotNonNull("the criterion needs a non-null orbit")
    if tprime_h is None:
        raise MissingTprime("the criterion needs an orbit cylinder (T'(h))")
    even = (ispec_free + n) % 2 == 0
    preserving = orientation > 0
    if null_class is NullClass.L_POSITIVE:
        unstable = even if preserving else not even
    else:
        unstable = (not even) if preserving else even
    return CriterionOutcome.CERTIFIED_UNSTABLE if unstable else CriterionOutcome.INCONCLUSIVE


@dataclass(frozen=True)
class ParityLedger:
    n: int
    ispec_free: int
    terms: tuple[int, int, int, int]
    checks: dict[str, bool]

    @property
    def lhs(self) -> int:
        return self.n + self.ispec_free

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def lines(self) -> list[str]:
        t1, t2, t3, t4 = self.terms
        out = [f"n + ispec_free = {self.lhs} = ({t1}) + ({t2}) + ({t3}) + ({t4})",
               "  (n - dim ker(A-I)) + (ispec_free - ispec_fixed) + (igeo - iclm_gamma2) + iclm_gamma2"]
        out += [f"  {name}: {'ok' if flag else 'FAILED'}" for name, flag in self.checks.items()]
        return out


def parity_audit(report: Any, strict: bool = True) -> ParityLedger:
    """Four-term decomposition of n + ispec_free with its parity checks.

    ``report`` needs the attributes n, dim_ker_A_minus_I, ispec_free,
    ispec_fixed, igeo, iclm_gamma2, orientation, kappa_sign and tprime_h.
    """
    n = int(report.n)
    t1 = n - int(report.dim_ker_A_minus_I)
    t2 = int(report.ispec_free) - int(report.ispec_fixed)
    t3 = int(report.igeo) - int(report.iclm_gamma2)
    t4 = int(report.iclm_gamma2)
    checks = {"sum identity": t1 + t2 + t3 + t4 == n + int(report.ispec_free)}
    if int(report.orientation) > 0:
        checks["n - dim ker(A-I) even (orientation preserving)"] = t1 % 2 == 0
    gamma1 = 1 if report.tprime_h is not None and report.tprime_h < 0 else 0
    checks["additivity igeo = iclm_gamma1 + iclm_gamma2"] = int(report.igeo) == gamma1 + t4
    if report.kappa_sign > 0:
        checks["difference + igeo - iclm_gamma2 odd (kappa > 0)"] = (t2 + t3) % 2 == 1
    elif report.kappa_sign < 0:
        checks["difference + igeo - iclm_gamma2 even (kappa < 0)"] = (t2 + t3) % 2 == 0
    ledger = ParityLedger(n, int(report.ispec_free), (t1, t2, t3, t4), checks)
    if strict and not ledger.ok:
        failed = [k for k, v in checks.items() if not v]
        raise LedgerMismatch("parity ledger failed: " + "; ".join(failed))
    return ledger
