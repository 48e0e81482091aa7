"""Spectral flow of paths of symmetric matrices.

Endpoint convention: interior crossings contribute the signature of the
crossing form, the start contributes ``-m^-(Gamma(a))`` and the end
``+m^+(Gamma(b))``.  In finite dimension this always equals
``m^-(L(a)) - m^-(L(b))``, which is used as the oracle throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import IrregularCrossing, SingularA
from .symplectic_core import (
    SVD_REL_TOL,
    SymmetricMatrix,
    morse_index,
    null_space,
    numerical_rank,
    signature,
)

__all__ = [
    "CrossingRecord",
    "SymmetricFormPath",
    "BlockPerturbationFamily",
    "spectral_flow",
    "spectral_flow_crossings",
    "morse_difference",
    "relative_morse_index",
    "block_morse_index",
    "spfl_family_shrink",
    "spfl_family_grow",
]


@dataclass(frozen=True)
class CrossingRecord:
    t: float
    kernel_dim: int
    crossing_form: SymmetricMatrix
    regular: bool

    @property
    def contribution(self) -> int:
        p, _, m = signature(self.crossing_form)
        return p - m


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


class SymmetricFormPath:
    """Path s -> L(s) of symmetric matrices on [a, b].

    Built either from a callable (exact refinement) or from samples, which
    are interpolated entrywise by cubic splines.
    """

    def __init__(self, fn: Callable[[float], np.ndarray], a: float = 0.0, b: float = 1.0,
                 samples: int = 65, derivative: Callable[[float], np.ndarray] | None = None,
                 grid: Sequence[float] | None = None):
        if not b > a:
            raise ValueError("interval must satisfy a < b")
        self.fn = fn
        self.a = float(a)
        self.b = float(b)
        self._derivative = derivative
        self.grid = np.asarray(grid, dtype=float) if grid is not None else np.linspace(a, b, samples)
        self.dim = np.asarray(fn(self.a)).shape[0]

    @classmethod
    def from_samples(cls, times: Sequence[float], mats: Sequence[np.ndarray]) -> "SymmetricFormPath":
        t = np.asarray(times, dtype=float)
        m = np.array([_sym(np.asarray(x, dtype=float)) for x in mats])
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        spline = CubicSpline(t, m, axis=0)
        return cls(lambda s: _sym(spline(s)), t[0], t[-1], grid=t,
                   derivative=lambda s: _sym(spline(s, 1)))

    def __call__(self, s: float) -> np.ndarray:
        return _sym(np.asarray(self.fn(s), dtype=float))

    def derivative(self, s: float) -> np.ndarray:
        if self._derivative is not None:
            return _sym(np.asarray(self._derivative(s), dtype=float))
        span = self.b - self.a
        h = 1e-5 * span
        # one-sided stencils at the ends keep evaluations inside [a, b]
        if s - 2 * h < self.a:
            d1 = (-3 * self(s) + 4 * self(s + h) - self(s + 2 * h)) / (2 * h)
            d2 = (-3 * self(s) + 4 * self(s + h / 2) - self(s + h)) / h
        elif s + 2 * h > self.b:
            d1 = (3 * self(s) - 4 * self(s - h) + self(s - 2 * h)) / (2 * h)
            d2 = (3 * self(s) - 4 * self(s - h / 2) + self(s - h)) / h
        else:
            d1 = (self(s + h) - self(s - h)) / (2 * h)
            d2 = (self(s + h / 2) - self(s - h / 2)) / h
        return (4 * d2 - d1) / 3

    def shifted(self, eps: float) -> "SymmetricFormPath":
        eye = np.eye(self.dim)
        der = None if self._derivative is None else self._derivative
        return SymmetricFormPath(lambda s: self(s) + eps * eye, self.a, self.b,
                                 grid=self.grid, derivative=der)

    def restrict(self, a: float, b: float) -> "SymmetricFormPath":
        inner = self.grid[(self.grid > a) & (self.grid < b)]
        grid = np.concatenate([[a], inner, [b]])
        if grid.size < 9:
            grid = np.linspace(a, b, 9)
        return SymmetricFormPath(self.fn, a, b, grid=grid, derivative=self._derivative)


@dataclass
class _Scan:
    path: SymmetricFormPath
    zero_rel: float
    scale: float
    ts: list = field(default_factory=list)

    def eigs(self, s: float) -> np.ndarray:
        return np.linalg.eigvalsh(self.path(s))

    def tol(self) -> float:
        return max(1e-13, self.zero_rel * self.scale)

    def count(self, s: float) -> int:
        return int(np.sum(self.eigs(s) < -self.tol()))


def _crossing_form(path: SymmetricFormPath, s: float, kernel_tol: float) -> tuple[np.ndarray, np.ndarray]:
    mat = path(s)
    w, v = np.linalg.eigh(mat)
    ker = v[:, np.abs(w) <= kernel_tol]
    gamma = ker.T @ path.derivative(s) @ ker
    return _sym(gamma), ker


def _is_regular(gamma: np.ndarray, deriv_scale: float) -> bool:
    if gamma.size == 0:
        return True
    ev = np.linalg.eigvalsh(gamma)
    return bool(np.min(np.abs(ev)) > 1e-7 * max(deriv_scale, 1e-300))


def spectral_flow_crossings(path: SymmetricFormPath, zero_rel: float = SVD_REL_TOL,
                            t_tol: float = 1e-10, max_depth: int = 80) -> tuple[int, list[CrossingRecord]]:
    """Crossing-form evaluation of the spectral flow, without retry.

    Returns ``(flow, crossings)``; raises IrregularCrossing when a crossing
    form is degenerate or disagrees with the local eigenvalue count change.
    """
    a, b = path.a, path.b
    span = b - a
    grid = np.unique(np.concatenate([[a], path.grid[(path.grid > a) & (path.grid < b)], [b]]))
    eig_grid = [np.linalg.eigvalsh(path(s)) for s in grid]
    scale = max(max(float(np.max(np.abs(e))) for e in eig_grid), 1e-300)
    scan = _Scan(path, zero_rel, scale)
    ztol = scan.tol()
    ktol = max(ztol, 1e-7 * scale)
    dscale = max(float(np.linalg.norm(path.derivative(s), 2)) for s in (a, 0.5 * (a + b), b))
    dscale = max(dscale, 1e-300)

    records: list[CrossingRecord] = []
    flow = 0

    def endpoint(s: float) -> tuple[np.ndarray, int]:
        e = np.linalg.eigvalsh(path(s))
        kdim = int(np.sum(np.abs(e) <= ztol))
        if kdim == 0:
            return np.zeros((0, 0)), 0
        gamma, _ = _crossing_form(path, s, ztol)
        if not _is_regular(gamma, dscale):
            raise IrregularCrossing(s, "degenerate endpoint crossing form")
        return gamma, kdim

    gamma_a, kdim_a = endpoint(a)
    gamma_b, kdim_b = endpoint(b)
    neg_a, neg_b = 0, 0
    if kdim_a:
        p, _, m = signature(gamma_a)
        neg_a = m
        flow -= m
        records.append(CrossingRecord(a, kdim_a, SymmetricMatrix(gamma_a), True))
    if kdim_b:
        p, _, m = signature(gamma_b)
        flow += p
        neg_b = p
    counts = [int(np.sum(e < -ztol)) for e in eig_grid]
    counts[0] += neg_a
    counts[-1] += neg_b

    found: list[tuple[float, float, int]] = []

    def locate(lo: float, hi: float, c_lo: int, c_hi: int, depth: int) -> None:
        if c_lo == c_hi:
            return
        if hi - lo <= t_tol * span or depth >= max_depth:
            found.append((lo, hi, c_lo - c_hi))
            return
        mid = 0.5 * (lo + hi)
        c_mid = scan.count(mid)
        locate(lo, mid, c_lo, c_mid, depth + 1)
        locate(mid, hi, c_mid, c_hi, depth + 1)

    for k in range(grid.size - 1):
        locate(grid[k], grid[k + 1], counts[k], counts[k + 1], 0)

    # touch points: local minima of the smallest |eigenvalue| without a count change
    min_abs = np.array([np.min(np.abs(e)) for e in eig_grid])
    for k in range(1, grid.size - 1):
        nb = max(min_abs[k - 1], min_abs[k + 1])
        # a persistent kernel is a plateau, not a touch point
        if min_abs[k] <= min(min_abs[k - 1], min_abs[k + 1]) and min_abs[k] < 0.5 * nb and min_abs[k] < 1e-3 * scale:
            if any(abs(0.5 * (lo + hi) - grid[k]) <= grid[k + 1] - grid[k - 1] for lo, hi, _ in found):
                continue
            # follow the signed eigenvalue nearest zero: a dip through zero and back is a
            # pair of crossings inside one cell, which the bisection then separates
            e_k = eig_grid[k]
            idx = int(np.argmin(np.abs(e_k)))
            sign = 1.0 if e_k[idx] > 0 else -1.0
            lo_k, hi_k = grid[k - 1], grid[k + 1]
            ext = minimize_scalar(lambda s: sign * float(scan.eigs(s)[idx]), bounds=(lo_k, hi_k),
                                  method="bounded", options={"xatol": t_tol * span})
            c_ext = scan.count(ext.x)
            if c_ext != counts[k]:
                before = len(found)
                locate(lo_k, ext.x, counts[k - 1], c_ext, 0)
                locate(ext.x, hi_k, c_ext, counts[k + 1], 0)
                if len(found) > before:
                    continue
            res = minimize_scalar(lambda s: float(np.min(np.abs(scan.eigs(s)))),
                                  bounds=(lo_k, hi_k), method="bounded",
                                  options={"xatol": t_tol * span})
            if res.fun <= ktol:
                found.append((res.x, res.x, 0))

    merged: list[list] = []
    for lo, hi, delta in sorted(found):
        if merged and lo - merged[-1][1] <= 1e-9 * span:
            merged[-1][1] = max(merged[-1][1], hi)
            merged[-1][2] += delta
        else:
            merged.append([lo, hi, delta])

    for lo, hi, delta in merged:
        s = 0.5 * (lo + hi)
        gamma, ker = _crossing_form(path, s, ktol)
        regular = _is_regular(gamma, dscale)
        if gamma.size:
            p, _, m = signature(gamma)
            contrib = p - m
        else:
            contrib = 0
        if not regular or contrib != delta:
            raise IrregularCrossing(s, f"crossing form signature {contrib} vs count change {delta}")
        records.append(CrossingRecord(s, ker.shape[1], SymmetricMatrix(gamma), True))
        flow += contrib
    if kdim_b:
        records.append(CrossingRecord(b, kdim_b, SymmetricMatrix(gamma_b), True))
    return flow, records


def spectral_flow(path: SymmetricFormPath, zero_rel: float = SVD_REL_TOL, retries: int = 1,
                  return_crossings: bool = False):
    """Spectral flow of a path of symmetric matrices.

    On an irregular crossing the path is shifted by ``eps * I`` with
    ``eps = 1e-6`` times the spectral radius and the computation is retried;
    for eps > 0 small the shift leaves the flow unchanged.
    """
    try:
        flow, recs = spectral_flow_crossings(path, zero_rel)
    except IrregularCrossing:
        if retries <= 0:
            raise
        radius = max(float(np.max(np.abs(np.linalg.eigvalsh(path(s))))) for s in (path.a, path.b))
        eps = 1e-6 * max(radius, 1e-12)
        flow, recs = spectral_flow_crossings(path.shifted(eps), zero_rel)
    return (flow, recs) if return_crossings else flow


def morse_difference(path: SymmetricFormPath, zero_rel: float = SVD_REL_TOL) -> int:
    """Oracle m^-(L(a)) - m^-(L(b))."""
    return morse_index(path(path.a)) - morse_index(path(path.b))


def _spectral_subspaces(s: np.ndarray, zero_rel: float) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(_sym(s))
    tol = max(1e-12, zero_rel * float(np.max(np.abs(w))) if w.size else 0.0)
    return v[:, w < -tol], v[:, w >= -tol]


def _intersection_dim(u: np.ndarray, v: np.ndarray) -> int:
    if u.shape[1] == 0 or v.shape[1] == 0:
        return 0
    return u.shape[1] + v.shape[1] - numerical_rank(np.hstack([u, v]), 1e-8)


def relative_morse_index(t_form, s_form, zero_rel: float = SVD_REL_TOL) -> int:
    """dim(E-(S) cap (E+(T)+E0(T))) - dim(E-(T) cap (E+(S)+E0(S)))."""
    t = t_form.entries if isinstance(t_form, SymmetricMatrix) else np.asarray(t_form, dtype=float)
    s = s_form.entries if isinstance(s_form, SymmetricMatrix) else np.asarray(s_form, dtype=float)
    if t.shape != s.shape:
        raise ValueError("forms must have the same dimension")
    t_neg, t_nonneg = _spectral_subspaces(t, zero_rel)
    s_neg, s_nonneg = _spectral_subspaces(s, zero_rel)
    return _intersection_dim(s_neg, t_nonneg) - _intersection_dim(t_neg, s_nonneg)


def block_morse_index(b, c, zero_rel: float = SVD_REL_TOL) -> int:
    """Morse index of [[0, B], [B*, C]] as m^-(C restricted to ker B) + dim Im B."""
    bm = np.atleast_2d(np.asarray(b, dtype=float))
    cm = np.atleast_2d(np.asarray(c.entries if isinstance(c, SymmetricMatrix) else c, dtype=float))
    scale = float(np.max(np.abs(bm))) if bm.size else 0.0
    ker = null_space(bm, zero_rel) if scale > 0 else np.eye(cm.shape[0])
    restricted = ker.T @ cm @ ker
    return morse_index(restricted) + numerical_rank(bm, zero_rel)


@dataclass(frozen=True)
class BlockPerturbationFamily:
    """Symmetric block operator [[A, B], [B*, C]]; A is k x k, B is k x m, C is m x m."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        a = SymmetricMatrix(np.atleast_2d(np.asarray(self.A, dtype=float))).entries
        c = SymmetricMatrix(np.atleast_2d(np.asarray(self.C, dtype=float))).entries
        b = np.asarray(self.B, dtype=float).reshape(a.shape[0], c.shape[0])
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", c)

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def assemble(self, scale_b: float = 1.0, scale_c: float = 1.0) -> np.ndarray:
        return np.block([[self.A, scale_b * self.B], [scale_b * self.B.T, scale_c * self.C]])

    def shrink_path(self) -> SymmetricFormPath:
        return SymmetricFormPath(lambda s: self.assemble(1 - s, 1 - s), 0.0, 1.0, samples=33,
                                 derivative=lambda s: -self.assemble(1.0, 1.0) + np.block(
                                     [[self.A, np.zeros_like(self.B)],
                                      [np.zeros_like(self.B.T), np.zeros_like(self.C)]]))

    def grow_path(self) -> SymmetricFormPath:
        zero_a = np.zeros_like(self.A)
        return SymmetricFormPath(lambda s: self.assemble(s, s), 0.0, 1.0, samples=33,
                                 derivative=lambda s: np.block([[zero_a, self.B], [self.B.T, self.C]]))


def spfl_family_shrink(fam: BlockPerturbationFamily, verify: bool = False,
                       zero_rel: float = SVD_REL_TOL) -> int:
    """Flow of [[A, (1-s)B], [(1-s)B*, (1-s)C]] over [0, 1] in closed form.

    m^-(A0 restricted to W^perp) + dim(W cap W^perp) - dim(W cap ker A0), where
    W is the A-block coordinate subspace and W^perp its A0-orthogonal.
    """
    a0 = fam.assemble()
    k = fam.k
    w_perp = null_space(a0[:k, :], zero_rel, scale=max(float(np.linalg.norm(a0, 2)), 1e-300))
    restricted = w_perp.T @ a0 @ w_perp
    term1 = morse_index(restricted) if restricted.size else 0
    a_scale = max(float(np.linalg.norm(a0, 2)), 1e-300)
    ker_a = null_space(fam.A, zero_rel, scale=a_scale)
    term2 = ker_a.shape[1]
    term3 = null_space(np.vstack([fam.A, fam.B.T]), zero_rel, scale=a_scale).shape[1]
    value = term1 + term2 - term3
    if verify:
        tracked = spectral_flow(fam.shrink_path())
        if tracked != value:
            raise IrregularCrossing(0.0, f"closed form {value} disagrees with tracked flow {tracked}")
    return value


def spfl_family_grow(fam: BlockPerturbationFamily, verify: bool = False, gap: float | None = None,
                     zero_rel: float = SVD_REL_TOL) -> int:
    """Flow of [[A, sB], [sB*, sC]] over [0, 1]: equals -m^-(C - B* A^{-1} B)."""
    eigs = np.linalg.eigvalsh(fam.A)
    limit = gap if gap is not None else zero_rel * max(float(np.max(np.abs(eigs))), 1e-300)
    if np.min(np.abs(eigs)) <= limit:
        raise SingularA(f"A has spectrum in [-{limit:.2e}, {limit:.2e}]")
    schur = fam.C - fam.B.T @ np.linalg.solve(fam.A, fam.B)
    value = -morse_index(_sym(schur))
    if verify:
        tracked = spectral_flow(fam.grow_path())
        if tracked != value:
            raise IrregularCrossing(0.0, f"closed form {value} disagrees with tracked flow {tracked}")
    return value
