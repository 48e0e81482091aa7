"""CLM intersection index of Lagrangian paths and the Maslov-type index.

A Lagrangian ``L`` with orthonormal frame ``F`` is encoded relative to a
reference ``W`` (orthonormal frame ``X``) by the symmetric unitary
``U = Z Z^T`` with ``Z = X^T F + i (Omega X)^T F``.  ``dim(L cap W)`` is the
multiplicity of the eigenvalue 1 of ``U`` and the rotation ``exp(theta Omega)``
multiplies ``U`` by ``exp(2 i theta)``; the positive co-orientation of the
Maslov cycle is therefore counter-clockwise motion of eigenvalues through 1.

Two independent evaluations are provided: crossing forms (the default) and a
winding count of the eigenvalue phases of ``U`` (the oracle).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import EpsExhausted, IrregularCrossing, NotBlockTriangular, NotLinearlyStable
from .spectral_flow import CrossingRecord
from .symplectic_core import (
    LagrangianSubspace,
    SpComponent,
    SymmetricMatrix,
    SymplecticPath,
    diagonal_lagrangian,
    null_space,
    product_j,
    rotation,
    signature,
    sp_component,
    standard_j,
)

__all__ = [
    "LagrangianPath",
    "CrossingRecord",
    "ClmOptions",
    "clm_index",
    "clm_index_winding",
    "clm_crossings",
    "crossing_form",
    "clm_graph_index",
    "graph_path",
    "iota1_index",
    "zhu_block_index",
    "zhu_reference_lagrangian",
    "is_linearly_stable",
    "stable_component_probe",
]

_TWO_PI = 2.0 * np.pi


def _orthonormal(frame: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(frame)
    return q


class LagrangianPath:
    """Path t -> L(t) given by a frame function on [a, b].

    ``frames`` may carry precomputed frames on ``grid``; refinement always
    calls ``frame_fn``.
    """

    def __init__(self, frame_fn: Callable[[float], np.ndarray], a: float, b: float,
                 omega: np.ndarray | None = None, grid: Sequence[float] | None = None,
                 samples: int = 129, frames: np.ndarray | None = None):
        if not b > a:
            raise ValueError("interval must satisfy a < b")
        self.frame_fn = frame_fn
        self.a = float(a)
        self.b = float(b)
        f0 = np.asarray(frame_fn(self.a), dtype=float)
        self.n = f0.shape[1]
        self.omega = standard_j(self.n) if omega is None else np.asarray(omega, dtype=float)
        self.grid = np.asarray(grid, dtype=float) if grid is not None else np.linspace(a, b, samples)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        self.frames = frames

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.frame_fn(t), dtype=float)

    def subspace(self, t: float) -> LagrangianSubspace:
        return LagrangianSubspace(self(t), self.omega)

    def reparametrized(self, phi: Callable[[float], float], a: float, b: float) -> "LagrangianPath":
        return LagrangianPath(lambda s: self.frame_fn(phi(s)), a, b, self.omega, samples=self.grid.size)

    def restrict(self, a: float, b: float) -> "LagrangianPath":
        count = max(33, int(self.grid.size * (b - a) / (self.b - self.a)))
        return LagrangianPath(self.frame_fn, a, b, self.omega, samples=count)

    def transformed(self, phi: Callable[[float], np.ndarray]) -> "LagrangianPath":
        return LagrangianPath(lambda t: phi(t) @ self.frame_fn(t), self.a, self.b, self.omega,
                              grid=self.grid)

    def frames_on(self, ts: np.ndarray) -> np.ndarray:
        if self.frames is not None and ts.shape == self.grid.shape and np.array_equal(ts, self.grid):
            return self.frames
        return np.array([self(t) for t in ts])


@dataclass
class ClmOptions:
    eps: float | None = None
    eps_cap: float = 1e-3
    t_tol: float = 1e-10
    kernel_angle: float = 1e-6
    max_step_angle: float = 0.4
    max_refine: int = 14
    retries: int = 3
    endpoint_formula: bool = False
    winding_fallback: bool = True


class _Chart:
    """Unitary encoding of a Lagrangian path relative to a fixed W."""

    def __init__(self, path: LagrangianPath, w: LagrangianSubspace):
        if w.frame.shape[0] != path.omega.shape[0]:
            raise ValueError("reference Lagrangian lives in a different space")
        self.path = path
        self.om = path.omega
        self.x = _orthonormal(w.frame)
        self.ox = self.om @ self.x

    def z(self, frame: np.ndarray) -> np.ndarray:
        f = _orthonormal(frame)
        return self.x.T @ f + 1j * (self.ox.T @ f)

    def u(self, frame: np.ndarray) -> np.ndarray:
        z = self.z(frame)
        return z @ z.T

    def u_at(self, t: float) -> np.ndarray:
        return self.u(self.path(t))


def _angles(u: np.ndarray, shift: float) -> np.ndarray:
    """Principal eigen-angles in (-pi, pi] of exp(-2 i shift) U."""
    return np.angle(np.exp(-2j * shift) * np.linalg.eigvals(u))


def _step_phase(u0: np.ndarray, u1: np.ndarray) -> tuple[float, float]:
    """Total phase increment (sum of eigen-angles of U1 U0^*) and its largest eigen-angle."""
    ang = np.angle(np.linalg.eigvals(u1 @ u0.conj().T))
    return float(np.sum(ang)), float(np.max(np.abs(ang))) if ang.size else 0.0


def _principal_sum(u: np.ndarray, shift: float) -> float:
    ang = np.mod(_angles(u, shift), _TWO_PI)
    # eigenvalues numerically at 2 pi are at 1 from below
    ang[ang > _TWO_PI - 1e-14] = 0.0
    return float(np.sum(ang))


def _sample_chart(chart: _Chart, opts: ClmOptions) -> tuple[np.ndarray, list[np.ndarray]]:
    ts = chart.path.grid
    frames = chart.path.frames_on(ts)
    us = [chart.u(f) for f in frames]
    ts = list(ts)
    for _ in range(opts.max_refine):
        new_ts, new_us, changed = [ts[0]], [us[0]], False
        for k in range(len(ts) - 1):
            _, big = _step_phase(us[k], us[k + 1])
            if big > opts.max_step_angle:
                mid = 0.5 * (ts[k] + ts[k + 1])
                new_ts.append(mid)
                new_us.append(chart.u_at(mid))
                changed = True
            new_ts.append(ts[k + 1])
            new_us.append(us[k + 1])
        ts, us = new_ts, new_us
        if not changed:
            break
    return np.asarray(ts), us


def _net_count(u0: np.ndarray, u1: np.ndarray, shift: float) -> int:
    dtheta, _ = _step_phase(u0, u1)
    val = (dtheta - _principal_sum(u1, shift) + _principal_sum(u0, shift)) / _TWO_PI
    return int(round(val))


def _choose_eps(chart: _Chart, opts: ClmOptions) -> float:
    if opts.eps is not None:
        return opts.eps
    gaps = []
    for t in (chart.path.a, chart.path.b):
        ang = np.abs(_angles(chart.u_at(t), 0.0))
        nonzero = ang[ang > 1e-8]
        if nonzero.size:
            gaps.append(float(np.min(nonzero)))
    # the shift moves phases by 2 eps; keep them well inside the endpoint gaps
    eps = min(opts.eps_cap, 0.25 * min(gaps)) if gaps else opts.eps_cap
    return eps


def _s_chart(path: LagrangianPath, fstar: np.ndarray, t: float, rot: np.ndarray) -> np.ndarray:
    f = rot @ path(t)
    xm = fstar.T @ f
    ym = (path.omega @ fstar).T @ f
    return ym @ np.linalg.inv(xm)


def crossing_form(path: LagrangianPath, w: LagrangianSubspace, t: float, shift: float = 0.0,
                  complement: np.ndarray | None = None, kernel_dim: int | None = None,
                  h: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Crossing form of exp(-shift Omega) L(t) against W at instant t.

    The form is obtained by writing nearby Lagrangians as graphs over L(t*)
    in the transversal complement (``Omega L(t*)`` by default, or the
    Lagrangian spanned by ``complement``) and differentiating the
    symmetric chart by Richardson-extrapolated finite differences.  Returns
    ``(Gamma, K)`` with ``K`` a frame of the kernel coordinates.
    """
    om = path.omega
    rot = rotation(0, -shift, om)
    fstar = _orthonormal(rot @ path(t))
    x = _orthonormal(w.frame)
    bmat = (om @ x).T @ fstar
    _, sv, vt = np.linalg.svd(bmat)
    if kernel_dim is None:
        kernel_dim = int(np.sum(sv <= 1e-7 * max(1.0, sv[0] if sv.size else 1.0)))
    ker = vt[vt.shape[0] - kernel_dim:].T if kernel_dim else np.zeros((path.n, 0))
    span = path.b - path.a
    step = h if h is not None else 1e-5 * span

    if complement is None:
        def chart(s):
            return _s_chart(path, fstar, s, rot)
        coords = np.eye(path.n)
    else:
        comp = _orthonormal(np.asarray(complement, dtype=float))

        def chart(s):
            f = rot @ path(s)
            basis = np.hstack([fstar, comp])
            coef = np.linalg.solve(basis, f)
            c_low, c_high = coef[: path.n], coef[path.n:]
            g = c_high @ np.linalg.inv(c_low)
            # omega(F* a, comp g a) as a bilinear form in a
            return (om @ fstar).T @ comp @ g
        coords = np.eye(path.n)

    def deriv(s, hh):
        if s - 2 * hh < path.a:
            return (-3 * chart(s) + 4 * chart(s + hh) - chart(s + 2 * hh)) / (2 * hh)
        if s + 2 * hh > path.b:
            return (3 * chart(s) - 4 * chart(s - hh) + chart(s - 2 * hh)) / (2 * hh)
        return (chart(s + hh) - chart(s - hh)) / (2 * hh)

    d1 = deriv(t, step)
    d2 = deriv(t, step / 2)
    sdot = (4 * d2 - d1) / 3
    sdot = 0.5 * (sdot + sdot.T)
    gamma = ker.T @ coords @ sdot @ coords.T @ ker
    return 0.5 * (gamma + gamma.T), ker


def _is_dip(values: np.ndarray | list, k: int, lo: int, hi: int) -> bool:
    """Strict local minimum well below a neighbour; plateaus (persistent kernels) are rejected."""
    v, a, b = values[k], values[lo], values[hi]
    return v <= a and v <= b and v < 0.5 * max(a, b)


def _kernel_dim(chart: _Chart, t: float, shift: float, tol: float) -> int:
    return int(np.sum(np.abs(_angles(chart.u_at(t), shift)) <= tol))


def _locate(chart: _Chart, shift: float, ts: np.ndarray, us: list[np.ndarray], opts: ClmOptions,
            lo_limit: float, hi_limit: float) -> list[tuple[float, int]]:
    """Isolated crossing instants of the shifted path with their net counts."""
    span = chart.path.b - chart.path.a
    found: list[tuple[float, float, int]] = []

    def recurse(lo, hi, u_lo, u_hi, count, depth):
        if count == 0 and depth > 0:
            return
        if hi - lo <= opts.t_tol * span or depth > 70:
            found.append((lo, hi, count))
            return
        mid = 0.5 * (lo + hi)
        u_mid = chart.u_at(mid)
        c1 = _net_count(u_lo, u_mid, shift)
        c2 = _net_count(u_mid, u_hi, shift)
        if c1:
            recurse(lo, mid, u_lo, u_mid, c1, depth + 1)
        if c2:
            recurse(mid, hi, u_mid, u_hi, c2, depth + 1)

    dist = [float(np.min(np.abs(_angles(u, shift)))) if u.size else np.inf for u in us]
    for k in range(len(ts) - 1):
        if ts[k + 1] <= lo_limit or ts[k] >= hi_limit:
            continue
        lo, hi = max(ts[k], lo_limit), min(ts[k + 1], hi_limit)
        u_lo = us[k] if lo == ts[k] else chart.u_at(lo)
        u_hi = us[k + 1] if hi == ts[k + 1] else chart.u_at(hi)
        c = _net_count(u_lo, u_hi, shift)
        if c:
            recurse(lo, hi, u_lo, u_hi, c, 1)
    # touch points: phase distance to 1 has a small local minimum without a net passage
    last = len(ts) - 1
    for k in range(len(ts)):
        lo_k, hi_k = max(k - 1, 0), min(k + 1, last)
        if ts[hi_k] <= lo_limit or ts[lo_k] >= hi_limit:
            continue
        if _is_dip(dist, k, lo_k, hi_k) and dist[k] < 0.05:
            window = ts[hi_k] - ts[lo_k]
            if any(abs(0.5 * (lo + hi) - ts[k]) <= window for lo, hi, _ in found):
                continue
            res = minimize_scalar(lambda s: float(np.min(np.abs(_angles(chart.u_at(s), shift)))),
                                  bounds=(max(ts[lo_k], lo_limit), min(ts[hi_k], hi_limit)),
                                  method="bounded", options={"xatol": opts.t_tol * span})
            if res.fun <= opts.kernel_angle:
                found.append((res.x, res.x, 0))
    found.sort()
    merged: list[list] = []
    for lo, hi, c in found:
        if merged and lo - merged[-1][1] <= 1e-9 * span:
            merged[-1][1] = max(merged[-1][1], hi)
            merged[-1][2] += c
        else:
            merged.append([lo, hi, c])
    return [(0.5 * (lo + hi), c) for lo, hi, c in merged]


def _record(chart: _Chart, w: LagrangianSubspace, t: float, shift: float, opts: ClmOptions,
            expected: int | None, lenient: bool = False) -> CrossingRecord:
    kdim = max(1, _kernel_dim(chart, t, shift, opts.kernel_angle)) if expected is not None else \
        _kernel_dim(chart, t, shift, 1e-9)
    gamma, _ = crossing_form(chart.path, w, t, shift, kernel_dim=kdim)
    scale = max(1.0, float(np.max(np.abs(gamma)))) if gamma.size else 1.0
    regular = gamma.size == 0 or float(np.min(np.abs(np.linalg.eigvalsh(gamma)))) > 1e-6 * scale
    rec = CrossingRecord(float(t), kdim, SymmetricMatrix(gamma), bool(regular))
    if expected is not None and (not regular or rec.contribution != expected):
        if lenient:
            return CrossingRecord(float(t), kdim, SymmetricMatrix(gamma), False)
        raise IrregularCrossing(t, f"crossing form signature {rec.contribution} vs phase count {expected}")
    return rec


def clm_crossings(path: LagrangianPath, w: LagrangianSubspace, opts: ClmOptions | None = None
                  ) -> tuple[int, list[CrossingRecord], float]:
    """Crossing-form evaluation; returns ``(index, crossings, eps_used)``."""
    opts = opts or ClmOptions()
    chart = _Chart(path, w)
    ts, us = _sample_chart(chart, opts)
    span = path.b - path.a

    if opts.endpoint_formula:
        total = 0
        records = []
        delta = 1e-7 * span
        for t, sign in ((path.a, +1), (path.b, -1)):
            kdim = _kernel_dim(chart, t, 0.0, 1e-9)
            if kdim:
                gamma, _ = crossing_form(path, w, t, 0.0, kernel_dim=kdim)
                p, z, m = signature(gamma)
                if z:
                    raise IrregularCrossing(t, "degenerate endpoint crossing form")
                total += p if sign > 0 else -m
                records.append(CrossingRecord(t, kdim, SymmetricMatrix(gamma), True))
        kernel_ends = [r.t for r in records]
        for t, c in _locate(chart, 0.0, ts, us, opts, path.a + delta, path.b - delta):
            if c == 0 and any(abs(t - e) <= 10 * delta for e in kernel_ends):
                continue  # tail of an endpoint kernel, already counted
            rec = _record(chart, w, t, 0.0, opts, c)
            total += rec.contribution
            records.append(rec)
        return total, sorted(records, key=lambda r: r.t), 0.0

    eps = _choose_eps(chart, opts)
    last_err: IrregularCrossing | None = None
    for _ in range(opts.retries + 1):
        try:
            total = 0
            records = []
            for t, c in _locate(chart, eps, ts, us, opts, path.a, path.b):
                rec = _record(chart, w, t, eps, opts, c)
                total += rec.contribution
                records.append(rec)
            return total, records, eps
        except IrregularCrossing as err:
            last_err = err
            eps *= 0.37
    if not opts.winding_fallback:
        raise last_err  # type: ignore[misc]
    # budget spent: the phase count is topological, so it settles disputed crossings
    eps /= 0.37
    total = 0
    records = []
    for t, c in _locate(chart, eps, ts, us, opts, path.a, path.b):
        rec = _record(chart, w, t, eps, opts, c, lenient=True)
        total += rec.contribution if rec.regular else c
        records.append(rec)
    return total, records, eps


def clm_index_winding(path: LagrangianPath, w: LagrangianSubspace, opts: ClmOptions | None = None) -> int:
    """Oracle: net counter-clockwise passages through 1 of the shifted phases."""
    opts = opts or ClmOptions()
    chart = _Chart(path, w)
    ts, us = _sample_chart(chart, opts)
    eps = _choose_eps(chart, opts)
    theta = sum(_step_phase(us[k], us[k + 1])[0] for k in range(len(us) - 1))
    val = (theta - _principal_sum(us[-1], eps) + _principal_sum(us[0], eps)) / _TWO_PI
    return int(round(val))


def clm_index(path: LagrangianPath, w: LagrangianSubspace, opts: ClmOptions | None = None,
              method: str = "crossing") -> int:
    """CLM index of the Lagrangian path relative to W.

    ``method="crossing"`` sums crossing-form signatures of the path rotated
    by exp(-eps Omega) (or, with ``opts.endpoint_formula``, applies the
    endpoint formula to the unrotated path); ``method="winding"`` is the
    phase-counting oracle.
    """
    if method == "winding":
        return clm_index_winding(path, w, opts)
    if method != "crossing":
        raise ValueError(f"unknown method {method!r}")
    return clm_crossings(path, w, opts)[0]


def graph_path(psi: SymplecticPath, grid: Sequence[float] | None = None) -> LagrangianPath:
    """t -> Gr(psi(t)) in the doubled space."""
    dim = psi.dim
    eye = np.eye(dim)
    ts = psi.times if grid is None else np.asarray(grid, dtype=float)
    frames = None
    if grid is None:
        frames = np.concatenate([np.broadcast_to(eye, psi.mats.shape), psi.mats], axis=1)
    return LagrangianPath(lambda t: np.vstack([eye, psi(t)]), psi.a, psi.b, product_j(dim // 2),
                          grid=ts, frames=frames)


def clm_graph_index(psi: SymplecticPath, opts: ClmOptions | None = None, method: str = "crossing") -> int:
    """iota_CLM(Delta, Gr(psi(t))) in (R^2n x R^2n, -omega x omega)."""
    if psi.n == 0:
        return 0
    return clm_index(graph_path(psi), diagonal_lagrangian(psi.n), opts, method)


def _rotated(psi: SymplecticPath, eps: float, t: float) -> np.ndarray:
    return rotation(psi.n, -eps) @ psi(t)


def _admissible(psi: SymplecticPath, eps: float) -> bool:
    for t in (psi.a, psi.b):
        m = psi(t)
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.linalg.svd(rotation(psi.n, -eps) @ m - np.eye(2 * psi.n), compute_uv=False)[-1] <= 1e-9 * scale:
            return False
        # no crossing may sit between the unrotated endpoint and the rotated one
        thetas = np.linspace(0.0, eps, 9)[1:]
        dets = [np.linalg.det(rotation(psi.n, -th) @ m - np.eye(2 * psi.n)) for th in thetas]
        if min(dets) < 0 < max(dets):
            return False
    return True


def _dist_to_one(m: np.ndarray) -> tuple[float, np.ndarray]:
    ev = np.linalg.eigvals(m)
    return float(np.min(np.abs(ev - 1.0))), ev


def _spectral_motion(e0: np.ndarray, e1: np.ndarray) -> float:
    gap = np.abs(e0[:, None] - e1[None, :])
    return float(max(np.max(np.min(gap, axis=1)), np.max(np.min(gap, axis=0))))


def _refined_scan(psi: SymplecticPath, rot: np.ndarray, min_width: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Samples of exp(-eps J) psi on which every passage of an eigenvalue through 1 is resolved.

    The distance d(t) from the spectrum to 1 moves no faster than the
    eigenvalues, so a piece whose endpoint distances exceed the spectral
    motion across it cannot contain a zero; other pieces are bisected down to
    ``min_width``.
    """
    mats = list(np.einsum("ij,kjl->kil", rot, psi.mats))
    info = [_dist_to_one(m) for m in mats]
    ts = list(psi.times)
    out_t, out_m, out_d = [ts[0]], [mats[0]], [info[0][0]]
    stack = [(ts[k], mats[k], info[k], ts[k + 1], mats[k + 1], info[k + 1])
             for k in range(len(ts) - 1)][::-1]
    while stack:
        t0, m0, i0, t1, m1, i1 = stack.pop()
        # conjugate pairs can pass through 1 together without moving the
        # spectrum as a set, so the normalised matrix increment also bounds the motion
        motion = max(_spectral_motion(i0[1], i1[1]),
                     np.linalg.norm(m1 - m0, 2) / max(1.0, np.linalg.norm(m0, 2)))
        if t1 - t0 > min_width and i0[0] + i1[0] <= 1.5 * motion:
            tm = 0.5 * (t0 + t1)
            mm = rot @ psi(tm)
            im = _dist_to_one(mm)
            stack.append((tm, mm, im, t1, m1, i1))
            stack.append((t0, m0, i0, tm, mm, im))
            continue
        out_t.append(t1)
        out_m.append(m1)
        out_d.append(i1[0])
    return np.asarray(out_t), np.asarray(out_m), np.asarray(out_d)


def _admissible_eps(psi: SymplecticPath, eps: float | None) -> float:
    if eps is None:
        eps = 1e-3
        gaps = []
        for t in (psi.a, psi.b):
            ev = np.linalg.eigvals(psi(t))
            on_circle = ev[np.abs(np.abs(ev) - 1) < 1e-6]
            ang = np.abs(np.angle(on_circle))
            # Jordan blocks at 1 split by ~sqrt(round-off); treat those as 1
            ang = ang[ang > 1e-4]
            if ang.size:
                gaps.append(float(np.min(ang)))
        if gaps:
            eps = min(eps, 0.25 * min(gaps))
    while not _admissible(psi, eps):
        eps *= 0.5
        if eps < 1e-12:
            raise EpsExhausted("no admissible rotation above 1e-12")
    return eps


def iota1_index(psi: SymplecticPath, eps: float | None = None, t_tol: float = 1e-10,
                return_crossings: bool = False, kernel_tol: float = 1e-6, cluster_width: float = 1e-3):
    """Maslov-type index: signed intersections of exp(-eps J) psi with Sp(2n)^0.

    Crossings are located by sign changes of det(exp(-eps J) psi(t) - I) with
    bisection, plus even-multiplicity touch points found by minimising the
    distance from the spectrum to 1.  Each crossing counts the signature of
    <J x, dM/dt x> on ker(M - I), which is positive along the co-orientation
    direction M exp(theta J).
    """
    if psi.n == 0:
        return (0, []) if return_crossings else 0
    from ._kernels import det_minus_identity

    n = psi.n
    eye = np.eye(2 * n)
    j = standard_j(n)
    eps = _admissible_eps(psi, eps)
    rot = rotation(n, -eps)
    span = psi.b - psi.a
    ts, mats, dist = _refined_scan(psi, rot, 1e-7 * span)
    dets = det_minus_identity(mats)

    def fdet(t):
        return float(np.linalg.det(rot @ psi(t) - eye))

    def fsig(t):
        sv = np.linalg.svd(rot @ psi(t) - eye, compute_uv=False)
        return float(sv[-1] / max(1.0, sv[0]))

    points: list[float] = []
    for k in range(ts.size - 1):
        if dets[k] == 0.0:
            points.append(float(ts[k]))
            continue
        if np.sign(dets[k]) != np.sign(dets[k + 1]) and dets[k + 1] != 0.0:
            lo, hi, flo = ts[k], ts[k + 1], dets[k]
            while hi - lo > t_tol * span:
                mid = 0.5 * (lo + hi)
                fm = fdet(mid)
                if np.sign(fm) == np.sign(flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
            points.append(0.5 * (lo + hi))
    last = ts.size - 1
    for k in range(ts.size):
        lo_k, hi_k = max(k - 1, 0), min(k + 1, last)
        # the rotated path has no persistent kernel, so any local minimum
        # is a candidate; the V-shaped sqrt profile defeats the stricter dip rule
        v = dist[k]
        if v <= dist[lo_k] and v <= dist[hi_k] and v < max(dist[lo_k], dist[hi_k]) and v < 0.05:
            window = ts[hi_k] - ts[lo_k]
            if any(abs(p - ts[k]) <= window for p in points):
                continue
            # eigenvalue distance is only sqrt-accurate at multiple
            # eigenvalues, so touches are confirmed on singular values
            res = minimize_scalar(fsig, bounds=(ts[lo_k], ts[hi_k]), method="bounded",
                                  options={"xatol": t_tol * span})
            if res.fun <= 1e-2 * kernel_tol:
                points.append(float(res.x))
    points.sort()
    merged: list[float] = []
    for p in points:
        if merged and p - merged[-1] <= 1e-9 * span:
            continue
        merged.append(p)

    records = []
    for t in merged:
        m = rot @ psi(t)
        mdot = rot @ psi.derivative(t)
        _, sv, vt = np.linalg.svd(m - eye)
        kdim = max(1, int(np.sum(sv <= kernel_tol * max(1.0, sv[0]))))
        ker = vt[2 * n - kdim:].T
        gamma = ker.T @ j.T @ mdot @ ker
        gamma = 0.5 * (gamma + gamma.T)
        p_, z_, m_ = signature(gamma)
        records.append(CrossingRecord(t, kdim, SymmetricMatrix(gamma), z_ == 0))
    total = 0
    checked: list[CrossingRecord] = []
    for group in _clusters(records, cluster_width * span):
        local = sum(r.contribution for r in group)
        # clustered or higher-dimensional crossings are settled by the phase winding
        if len(group) > 1 or not group[0].regular or group[0].kernel_dim > 1:
            lo, hi = _bracket(group, merged, psi.a, psi.b, cluster_width * span)
            count = _rotated_winding(psi, rot, lo, hi)
            if count != local:
                group = [CrossingRecord(r.t, r.kernel_dim, r.crossing_form, False) for r in group]
                local = count
        total += local
        checked.extend(group)
    records = checked
    return (total, records) if return_crossings else total


def _clusters(records: list[CrossingRecord], width: float) -> list[list[CrossingRecord]]:
    groups: list[list[CrossingRecord]] = []
    for r in records:
        if groups and r.t - groups[-1][-1].t <= width:
            groups[-1].append(r)
        else:
            groups.append([r])
    return groups


def _bracket(group: list[CrossingRecord], points: list[float], a: float, b: float,
             width: float) -> tuple[float, float]:
    """Interval around a cluster that stays clear of every other crossing."""
    first, last = group[0].t, group[-1].t
    before = [p for p in points if p < first]
    after = [p for p in points if p > last]
    lo = max(a, first - width, 0.5 * (first + before[-1]) if before else a)
    hi = min(b, last + width, 0.5 * (last + after[0]) if after else b)
    return lo, hi


def _rotated_winding(psi: SymplecticPath, rot: np.ndarray, lo: float, hi: float) -> int:
    """Net passage of Gr(rot psi) through the diagonal on [lo, hi] (non-degenerate ends)."""
    dim = psi.dim
    eye = np.eye(dim)
    path = LagrangianPath(lambda t: np.vstack([eye, rot @ psi(t)]), lo, hi, product_j(psi.n),
                          grid=np.linspace(lo, hi, 33))
    chart = _Chart(path, diagonal_lagrangian(psi.n))
    ts, us = _sample_chart(chart, ClmOptions(max_step_angle=0.2, max_refine=20))
    return sum(_net_count(us[k], us[k + 1], 0.0) for k in range(len(us) - 1))


def zhu_reference_lagrangian(v: LagrangianSubspace | np.ndarray) -> LagrangianSubspace:
    """W_I(V) = {(x, u, y, v): (x, y) in V, (u, v) in (D V)^perp} with D = diag(-I, I).

    For the diagonal V this is the diagonal Gr(I) of the doubled space.
    """
    fv = v.frame if isinstance(v, LagrangianSubspace) else np.asarray(v, dtype=float)
    n = fv.shape[0] // 2
    d = np.diag(np.concatenate([-np.ones(n), np.ones(n)]))
    perp = null_space((d @ fv).T)
    frame = np.zeros((4 * n, 2 * n))
    frame[0:n, :n] = fv[:n]
    frame[2 * n:3 * n, :n] = fv[n:]
    frame[n:2 * n, n:] = perp[:n]
    frame[3 * n:, n:] = perp[n:]
    return LagrangianSubspace(frame, product_j(n))


def zhu_block_index(path: SymplecticPath, v: LagrangianSubspace | np.ndarray | None = None,
                    tol: float = 1e-9) -> int:
    """Index of a lower block-triangular symplectic path from endpoint data only.

    m^+(M11(b)^T M21(b) | S(b)) - m^+(M11(a)^T M21(a) | S(a)) + dim S(a) - dim S(b)
    with S(t) = {x : (x, M11(t) x) in V}; V defaults to the diagonal of R^n x R^n.
    """
    n = path.n
    for m in path.mats:
        if np.max(np.abs(m[:n, n:])) > tol * max(1.0, float(np.max(np.abs(m)))):
            raise NotBlockTriangular("upper-right block does not vanish")
    if v is None:
        fv = np.vstack([np.eye(n), np.eye(n)])
    else:
        fv = v.frame if isinstance(v, LagrangianSubspace) else np.asarray(v, dtype=float)
    comp = null_space(fv.T)

    def terms(m):
        m11, m21 = m[:n, :n], m[n:, :n]
        s = null_space(comp.T @ np.vstack([np.eye(n), m11]), rel_tol=1e-9, scale=1.0)
        form = m11.T @ m21
        form = 0.5 * (form + form.T)
        restricted = s.T @ form @ s
        return signature(restricted)[0] if restricted.size else 0, s.shape[1]

    p_a, d_a = terms(path(path.a))
    p_b, d_b = terms(path(path.b))
    return p_b - p_a + d_a - d_b


def is_linearly_stable(m: np.ndarray, spec_tol: float = 1e-8, cluster_tol: float = 1e-7,
                       rank_tol: float = 1e-7) -> bool:
    """Spectrum on the unit circle and semisimple (rank test per eigenvalue cluster)."""
    from .stability import multiplier_clusters

    clusters = multiplier_clusters(m, cluster_tol, rank_tol)
    return all(abs(abs(c.value) - 1) <= spec_tol + cluster_tol and c.geometric == c.algebraic
               for c in clusters)


def _spectral_component(m: np.ndarray) -> SpComponent:
    """Sign of det(M - I) read as the product of (lambda - 1).

    The dead band is per factor, at eigenvalue round-off, so products of
    several small but well-resolved factors keep their sign.
    """
    vals, vecs = np.linalg.eig(m)
    floor = 10.0 * np.finfo(float).eps * np.linalg.cond(vecs) * np.linalg.norm(m, 2)
    if np.min(np.abs(vals - 1.0)) <= floor:
        return SpComponent.ZERO
    return SpComponent.PLUS if np.prod(vals - 1.0).real > 0 else SpComponent.MINUS


def stable_component_probe(m, delta: float = 1e-3) -> tuple[SpComponent, SpComponent]:
    """Components of exp(+delta J) M and exp(-delta J) M for linearly stable M."""
    a = m.entries if hasattr(m, "entries") else np.asarray(m, dtype=float)
    if not is_linearly_stable(a):
        raise NotLinearlyStable("matrix is not linearly stable")
    n = a.shape[0] // 2
    # Bauer-Fike: rotating by d moves each multiplier by at most cond(V) * d * |M|,
    # so keep d well below the distance of the multipliers other than 1 to 1
    vals, vecs = np.linalg.eig(a)
    dist = np.abs(vals - 1.0)
    away = dist[dist > 1e-6]
    d = delta
    if away.size:
        d = min(d, 0.1 * float(np.min(away)) / (np.linalg.cond(vecs) * np.linalg.norm(a, 2)))
    while True:
        plus = _spectral_component(rotation(n, d) @ a)
        minus = _spectral_component(rotation(n, -d) @ a)
        if (plus is not SpComponent.ZERO and minus is not SpComponent.ZERO) or d < 1e-12:
            return plus, minus
        d *= 0.5
