"""Trivialized periodic orbits, their linearization and monodromy.

An orbit is stored in rescaled time t in [0, 1] (physical time tT).  The
coefficients are the second derivatives of the Lagrangian along the orbit:
``P = d_vv L``, ``Q = d_qv L``, ``R = d_qq L`` together with ``L_q = d_q L``
and the velocity field ``x'``.  Jacobi fields ``u`` with momentum
``y = P u'/T + Q u`` solve ``z' = J B(t) z`` for ``z = (y, u)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .errors import (
    FamilyUnavailable,
    InvalidOrbit,
    MissingCallbacks,
    SingularP,
)
from .maslov import ClmOptions, clm_graph_index
from .symplectic_core import (
    SymmetricMatrix,
    SymplecticMatrix,
    SymplecticPath,
    standard_j,
    symplectic_residual,
)

__all__ = [
    "Coefficients",
    "LagrangianCallbacks",
    "NullClass",
    "OrbitData",
    "euler_lagrange_residual",
    "kappa_classify",
    "hamiltonian_coefficient",
    "fundamental_solution",
    "geometrical_index",
    "estimate_tprime",
]

BC_TOL = 1e-8
P_COND_LIMIT = 1e12


class NullClass(enum.Enum):
    L_POSITIVE = "LPositive"
    L_NEGATIVE = "LNegative"
    NOT_NON_NULL = "NotNonNull"

    def __str__(self) -> str:
        return self.value


class Coefficients(NamedTuple):
    """Coefficient values at one or several times (leading axis = time)."""

    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Lq: np.ndarray
    xprime: np.ndarray
    xsecond: np.ndarray


@dataclass(frozen=True)
class LagrangianCallbacks:
    """Evaluators of L and its first derivatives, plus the orbit in configuration space.

    ``position(t)`` and ``velocity(t)`` return arrays of shape (len(t), n)
    (``velocity`` is d/dt in rescaled time); ``lagrangian``, ``dv`` and ``dq``
    act row-wise on (q, v) batches with v the physical velocity.
    """

    position: Callable[[np.ndarray], np.ndarray]
    velocity: Callable[[np.ndarray], np.ndarray]
    lagrangian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dv: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dq: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _as_stack(values, count: int, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (count, *shape):
        raise InvalidOrbit(f"{name} must have shape {(count, *shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidOrbit(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class OrbitData:
    """Samples of the trivialized linearization of a periodic orbit.

    ``coeff_fn`` (optional) evaluates the coefficients exactly on an array
    of times and returns a :class:`Coefficients`; without it, cubic splines
    through the samples are used.  ``family`` maps an energy to the orbit of
    the same cylinder and ``period_fn`` maps it to the period; both feed
    :func:`estimate_tprime`.
    """

    n: int
    T: float
    h: float
    grid: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Lq: np.ndarray
    xprime: np.ndarray
    A: np.ndarray
    tprime_h: float | None = None
    xsecond: np.ndarray | None = None
    name: str = "orbit"
    coeff_fn: Callable[[np.ndarray], Coefficients] | None = field(default=None, repr=False)
    period_fn: Callable[[float], float] | None = field(default=None, repr=False)
    family: Callable[[float], "OrbitData"] | None = field(default=None, repr=False)
    callbacks: LagrangianCallbacks | None = field(default=None, repr=False)
    bc_tol: float = BC_TOL

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise InvalidOrbit("configuration dimension must be positive")
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidOrbit("period must be positive")
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 4 or np.any(np.diff(grid) <= 0):
            raise InvalidOrbit("grid must be strictly increasing with at least 4 points")
        if abs(grid[0]) > 1e-14 or abs(grid[-1] - 1.0) > 1e-14:
            raise InvalidOrbit("grid must span [0, 1]")
        k = grid.size
        set_ = object.__setattr__
        set_(self, "n", n)
        set_(self, "grid", grid)
        for name in ("P", "Q", "R"):
            set_(self, name, _as_stack(getattr(self, name), k, (n, n), name))
        for name in ("Lq", "xprime"):
            set_(self, name, _as_stack(getattr(self, name), k, (n,), name))
        if self.xsecond is not None:
            set_(self, "xsecond", _as_stack(self.xsecond, k, (n,), "xsecond"))
        set_(self, "P", 0.5 * (self.P + np.swapaxes(self.P, 1, 2)))
        set_(self, "R", 0.5 * (self.R + np.swapaxes(self.R, 1, 2)))
        a = np.asarray(self.A, dtype=float)
        if a.shape != (n, n):
            raise InvalidOrbit(f"A must be {n}x{n}")
        if np.max(np.abs(a.T @ a - np.eye(n))) > 1e-10:
            raise InvalidOrbit("A must be orthogonal")
        set_(self, "A", a)
        for idx in range(k):
            if np.linalg.cond(self.P[idx]) > P_COND_LIMIT:
                raise SingularP(float(grid[idx]))
        res = self.boundary_residual()
        if res > self.bc_tol:
            raise InvalidOrbit(f"boundary compatibility violated (residual {res:.3e})")
        set_(self, "_splines", None)

    @property
    def orientation(self) -> int:
        return 1 if np.linalg.det(self.A) > 0 else -1

    @property
    def A_d(self) -> np.ndarray:
        z = np.zeros_like(self.A)
        return np.block([[self.A, z], [z, self.A]])

    def boundary_residual(self) -> float:
        a = self.A
        p0, p1 = self.P[0], self.P[-1]
        return float(max(
            np.max(np.abs(p0 - a @ p1 @ a.T)),
            np.max(np.abs(self.Q[0] - a @ self.Q[-1] @ a.T)),
            np.max(np.abs(self.R[0] - a @ self.R[-1] @ a.T)),
        ))

    def _spline_set(self):
        sp = self.__dict__.get("_splines")
        if sp is None:
            xp = CubicSpline(self.grid, self.xprime, axis=0)
            sp = {
                "P": CubicSpline(self.grid, self.P, axis=0),
                "Q": CubicSpline(self.grid, self.Q, axis=0),
                "R": CubicSpline(self.grid, self.R, axis=0),
                "Lq": CubicSpline(self.grid, self.Lq, axis=0),
                "xprime": xp,
                "xsecond": (CubicSpline(self.grid, self.xsecond, axis=0) if self.xsecond is not None
                            else xp.derivative()),
            }
            object.__setattr__(self, "_splines", sp)
        return sp

    def coefficients(self, t) -> Coefficients:
        """Coefficients at the times ``t`` (array, leading axis = time)."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if self.coeff_fn is not None:
            return self.coeff_fn(ts)
        sp = self._spline_set()
        return Coefficients(*(sp[key](ts) for key in Coefficients._fields))

    def kappa(self, t=None) -> np.ndarray:
        if t is None:
            return np.einsum("kij,ki,kj->k", self.P, self.xprime, self.xprime)
        c = self.coefficients(t)
        return np.einsum("kij,ki,kj->k", c.P, c.xprime, c.xprime)

    def with_tprime(self, value: float | None) -> "OrbitData":
        kwargs = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kwargs["tprime_h"] = value
        return OrbitData(**kwargs)


def euler_lagrange_residual(orbit: OrbitData, callbacks: LagrangianCallbacks | None = None,
                            degree: int = 48) -> tuple[float, float]:
    """Max-norm residuals of the rescaled Euler-Lagrange equation and of the energy constraint.

    ``d/dt d_vL`` is obtained by differentiating a Chebyshev fit of
    ``d_vL(x(t), x'(t)/T)`` on Chebyshev points, which is spectrally accurate
    for smooth orbits.
    """
    cb = callbacks or orbit.callbacks
    if cb is None:
        raise MissingCallbacks("orbit carries no Lagrangian evaluators")
    T = orbit.T
    nodes = 0.5 * (1 - np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1)))
    q = np.asarray(cb.position(nodes), dtype=float)
    v = np.asarray(cb.velocity(nodes), dtype=float) / T
    p = np.asarray(cb.dv(q, v), dtype=float)
    dq = np.asarray(cb.dq(q, v), dtype=float)
    eq = 0.0
    for i in range(orbit.n):
        fit = np.polynomial.Chebyshev.fit(nodes, p[:, i], degree, domain=[0.0, 1.0])
        dp = fit.deriv()(nodes)
        eq = max(eq, float(np.max(np.abs(dp - T * dq[:, i]))))
    energy = np.asarray(cb.lagrangian(q, v), dtype=float) + orbit.h - np.einsum("ki,ki->k", p, v)
    return eq, float(np.max(np.abs(energy)))


def kappa_classify(orbit: OrbitData, null_rel: float = 1e-9) -> tuple[np.ndarray, NullClass]:
    kappa = orbit.kappa()
    tol = null_rel * float(np.max(np.abs(kappa))) if kappa.size else 0.0
    if kappa.size and np.min(kappa) > tol:
        return kappa, NullClass.L_POSITIVE
    if kappa.size and np.max(kappa) < -tol:
        return kappa, NullClass.L_NEGATIVE
    return kappa, NullClass.NOT_NON_NULL


def _b_stack(orbit: OrbitData, ts: np.ndarray) -> np.ndarray:
    c = orbit.coefficients(ts)
    T = orbit.T
    n = orbit.n
    out = np.empty((ts.size, 2 * n, 2 * n))
    for k in range(ts.size):
        p = c.P[k]
        if np.linalg.cond(p) > P_COND_LIMIT:
            raise SingularP(float(ts[k]))
        pinv = np.linalg.inv(p)
        pinv = 0.5 * (pinv + pinv.T)
        q = c.Q[k]
        out[k, :n, :n] = T * pinv
        out[k, :n, n:] = -T * pinv @ q
        out[k, n:, :n] = -T * q.T @ pinv
        lower = T * q.T @ pinv @ q - T * c.R[k]
        out[k, n:, n:] = 0.5 * (lower + lower.T)
    return out


def hamiltonian_coefficient(orbit: OrbitData, t: float) -> SymmetricMatrix:
    """B(t) with psi' = J B psi; the off-diagonal blocks are mutual transposes."""
    return SymmetricMatrix(_b_stack(orbit, np.array([float(t)]))[0])


INTEGRATORS = ("gauss4", "midpoint")


def _propagate(orbit: OrbitData, steps: int, method: str = "gauss4") -> tuple[np.ndarray, np.ndarray]:
    ts = np.linspace(0.0, 1.0, steps + 1)
    h = np.diff(ts)
    j = standard_j(orbit.n)
    if method == "midpoint":
        gens = np.einsum("ij,kjl->kil", j, _b_stack(orbit, ts[:-1] + 0.5 * h))
        return ts, _kernels.cayley_propagate(gens, h)
    if method != "gauss4":
        raise ValueError(f"unknown integrator {method!r}; choose from {INTEGRATORS}")
    off = 0.5 / np.sqrt(3.0)
    g1 = np.einsum("ij,kjl->kil", j, _b_stack(orbit, ts[:-1] + (0.5 - off) * h))
    g2 = np.einsum("ij,kjl->kil", j, _b_stack(orbit, ts[:-1] + (0.5 + off) * h))
    return ts, _kernels.gauss_propagate(g1, g2, h)


def fundamental_solution(orbit: OrbitData, steps: int = 2000, method: str = "gauss4") -> SymplecticPath:
    """psi(t) with psi(0) = I.

    ``method="gauss4"`` (default) is two-stage Gauss collocation, order 4;
    ``"midpoint"`` is the implicit midpoint rule, order 2.  Both are
    symplectic for linear systems.  The run is repeated with half the step;
    ``meta`` carries the step-halving error estimate, the symplecticity
    residuals of both runs and a Richardson-extrapolated monodromy.
    """
    if steps < 16:
        raise ValueError("at least 16 steps are required")
    ts, mats = _propagate(orbit, steps, method)
    _, fine = _propagate(orbit, 2 * steps, method)
    fine_on_coarse = fine[::2]
    j = standard_j(orbit.n)
    path = SymplecticPath(ts, mats)
    scale = max(1.0, float(np.max(np.abs(fine_on_coarse))))
    gain = 15.0 if method == "gauss4" else 3.0
    path.meta.update(
        steps=steps,
        method=method,
        error_estimate=float(np.max(np.abs(fine_on_coarse - mats))) / gain / scale,
        residual=float(np.max(_kernels.sympl_residuals(mats, j))),
        residual_half=float(np.max(_kernels.sympl_residuals(fine, j))),
        monodromy_refined=((gain + 1.0) * fine[-1] - mats[-1]) / gain,
    )
    return path


def geometrical_index(orbit: OrbitData, psi: SymplecticPath,
                      opts: ClmOptions | None = None) -> tuple[int, SymplecticMatrix]:
    """CLM index of t -> Gr(A_d psi(t)) against the diagonal, and the monodromy A_d psi(1)."""
    ad = orbit.A_d
    path = psi.transform(left=ad)
    mono = ad @ psi.mats[-1]
    return clm_graph_index(path, opts), SymplecticMatrix(mono, symplectic_residual(mono))


def estimate_tprime(family, h0: float, dh: float = 1e-3) -> float:
    """Richardson-extrapolated central difference of the period along the orbit cylinder.

    ``family`` is either a callable h -> period, a callable h -> OrbitData,
    or an OrbitData carrying ``period_fn`` / ``family``.
    """
    if isinstance(family, OrbitData):
        if family.period_fn is not None:
            period = family.period_fn
        elif family.family is not None:
            fam = family.family
            period = lambda h: fam(h).T  # noqa: E731
        else:
            raise FamilyUnavailable(f"orbit {family.name!r} exposes no energy family")
    elif callable(family):
        def period(h):
            val = family(h)
            return val.T if isinstance(val, OrbitData) else float(val)
    else:
        raise FamilyUnavailable("family must be callable")

    def central(step):
        return (period(h0 + step) - period(h0 - step)) / (2 * step)

    try:
        return float((4 * central(dh / 2) - central(dh)) / 3)
    except (ValueError, ZeroDivisionError, FloatingPointError) as err:
        raise FamilyUnavailable(f"period family undefined near h={h0}: {err}") from err
