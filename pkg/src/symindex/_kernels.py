"""Hot loops with a numba implementation and a pure-numpy fallback.

Set ``SYMINDEX_DISABLE_NUMBA=1`` to force the numpy versions (checked at
import time; ``use_numba(False)`` switches at runtime).
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised through the flag
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

_ENABLED = _HAVE_NUMBA and os.environ.get("SYMINDEX_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")


def numba_active() -> bool:
    return _ENABLED


def use_numba(flag: bool) -> None:
    global _ENABLED
    _ENABLED = bool(flag) and _HAVE_NUMBA


def cayley_propagate_numpy(gens: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Implicit midpoint for psi' = G psi with G frozen at interval midpoints.

    ``gens[k]`` is the generator at the midpoint of step k and ``h[k]`` the
    step length; returns the K+1 samples starting from the identity.
    """
    steps, m, _ = gens.shape
    out = np.empty((steps + 1, m, m))
    eye = np.eye(m)
    out[0] = eye
    for k in range(steps):
        half = 0.5 * h[k] * gens[k]
        out[k + 1] = np.linalg.solve(eye - half, (eye + half) @ out[k])
    return out


_GA12 = 0.25 - np.sqrt(3.0) / 6.0
_GA21 = 0.25 + np.sqrt(3.0) / 6.0


def gauss_propagate_numpy(g1: np.ndarray, g2: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Two-stage Gauss collocation (order 4, symplectic) for psi' = G psi.

    ``g1[k]`` and ``g2[k]`` are the generator at the two Gauss nodes of step k.
    """
    steps, m, _ = g1.shape
    out = np.empty((steps + 1, m, m))
    eye = np.eye(m)
    out[0] = eye
    lhs = np.empty((2 * m, 2 * m))
    rhs = np.vstack([eye, eye])
    for k in range(steps):
        hk = h[k]
        lhs[:m, :m] = eye - 0.25 * hk * g1[k]
        lhs[:m, m:] = -_GA12 * hk * g2[k]
        lhs[m:, :m] = -_GA21 * hk * g1[k]
        lhs[m:, m:] = eye - 0.25 * hk * g2[k]
        y = np.linalg.solve(lhs, rhs)
        step = eye + 0.5 * hk * (g1[k] @ y[:m] + g2[k] @ y[m:])
        out[k + 1] = step @ out[k]
    return out


def det_minus_identity_numpy(mats: np.ndarray) -> np.ndarray:
    m = mats.shape[1]
    return np.linalg.det(mats - np.eye(m))


def sympl_residuals_numpy(mats: np.ndarray, j: np.ndarray) -> np.ndarray:
    res = np.einsum("kji,jl,klm->kim", mats, j, mats) - j
    return np.max(np.abs(res), axis=(1, 2))


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _cayley_propagate_nb(gens, h):  # pragma: no cover - compiled
        steps, m, _ = gens.shape
        out = np.empty((steps + 1, m, m))
        eye = np.eye(m)
        out[0] = eye
        for k in range(steps):
            half = 0.5 * h[k] * gens[k]
            rhs = (eye + half) @ out[k]
            out[k + 1] = np.linalg.solve(eye - half, rhs)
        return out

    @numba.njit(cache=True)
    def _gauss_propagate_nb(g1, g2, h):  # pragma: no cover - compiled
        steps, m, _ = g1.shape
        out = np.empty((steps + 1, m, m))
        eye = np.eye(m)
        out[0] = eye
        lhs = np.empty((2 * m, 2 * m))
        rhs = np.empty((2 * m, m))
        rhs[:m] = eye
        rhs[m:] = eye
        for k in range(steps):
            hk = h[k]
            lhs[:m, :m] = eye - 0.25 * hk * g1[k]
            lhs[:m, m:] = -_GA12 * hk * g2[k]
            lhs[m:, :m] = -_GA21 * hk * g1[k]
            lhs[m:, m:] = eye - 0.25 * hk * g2[k]
            y = np.linalg.solve(lhs, rhs)
            step = eye + 0.5 * hk * (g1[k] @ np.ascontiguousarray(y[:m]) + g2[k] @ np.ascontiguousarray(y[m:]))
            out[k + 1] = step @ out[k]
        return out

    @numba.njit(cache=True)
    def _det_minus_identity_nb(mats):  # pragma: no cover - compiled
        count, m, _ = mats.shape
        out = np.empty(count)
        eye = np.eye(m)
        for k in range(count):
            out[k] = np.linalg.det(mats[k] - eye)
        return out

    @numba.njit(cache=True)
    def _sympl_residuals_nb(mats, j):  # pragma: no cover - compiled
        count, m, _ = mats.shape
        out = np.empty(count)
        for k in range(count):
            r = mats[k].T @ j @ mats[k] - j
            out[k] = np.max(np.abs(r))
        return out


def cayley_propagate(gens: np.ndarray, h: np.ndarray) -> np.ndarray:
    gens = np.ascontiguousarray(gens, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if _ENABLED:
        return _cayley_propagate_nb(gens, h)
    return cayley_propagate_numpy(gens, h)


def gauss_propagate(g1: np.ndarray, g2: np.ndarray, h: np.ndarray) -> np.ndarray:
    g1 = np.ascontiguousarray(g1, dtype=np.float64)
    g2 = np.ascontiguousarray(g2, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if _ENABLED:
        return _gauss_propagate_nb(g1, g2, h)
    return gauss_propagate_numpy(g1, g2, h)


def det_minus_identity(mats: np.ndarray) -> np.ndarray:
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    if _ENABLED:
        return _det_minus_identity_nb(mats)
    return det_minus_identity_numpy(mats)


def sympl_residuals(mats: np.ndarray, j: np.ndarray) -> np.ndarray:
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    if mats.shape[1] == 0:
        return np.zeros(mats.shape[0])
    if _ENABLED:
        return _sympl_residuals_nb(mats, np.ascontiguousarray(j, dtype=np.float64))
    return sympl_residuals_numpy(mats, j)
